use super::{DrumId, DrumScore, ScoreError};

/// Total map from drum to hand index (0 = left, 1 = right in bimanual setups).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandMap {
    pub n_hand: usize,
    hands: [Option<usize>; DrumId::COUNT],
}

impl HandMap {
    pub fn new(n_hand: usize) -> Self {
        Self {
            n_hand,
            hands: [None; DrumId::COUNT],
        }
    }

    pub fn with(mut self, drum: DrumId, hand: usize) -> Self {
        self.assign(drum, hand);
        self
    }

    pub fn assign(&mut self, drum: DrumId, hand: usize) {
        assert!(hand < self.n_hand, "hand {hand} out of range");
        self.hands[drum.index()] = Some(hand);
    }

    pub fn hand_of(&self, drum: DrumId) -> Option<usize> {
        self.hands[drum.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduledHit {
    pub step: usize,
    pub drum: DrumId,
}

/// Per-hand hit lists on the control grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledScore {
    pub hands: Vec<Vec<ScheduledHit>>,
    pub window_halfwidth_steps: usize,
    pub control_rate_hz: f64,
}

impl ScheduledScore {
    pub fn n_hand(&self) -> usize {
        self.hands.len()
    }

    pub fn total_hits(&self) -> usize {
        self.hands.iter().map(Vec::len).sum()
    }

    /// All hits of all hands ordered by step, as (hand, hit).
    pub fn merged(&self) -> Vec<(usize, ScheduledHit)> {
        let mut all: Vec<(usize, ScheduledHit)> = self
            .hands
            .iter()
            .enumerate()
            .flat_map(|(h, hits)| hits.iter().map(move |x| (h, *x)))
            .collect();
        all.sort_by_key(|(h, x)| (x.step, *h));
        all
    }

    pub fn last_step(&self) -> Option<usize> {
        self.hands.iter().filter_map(|h| h.last()).map(|x| x.step).max()
    }
}

/// Rounds every event to the nearest control step and splits by hand.
/// Duplicate hits (same hand, step and drum) collapse into one.
pub fn schedule(
    score: &DrumScore,
    control_rate_hz: f64,
    assignment: &HandMap,
    window_halfwidth_steps: usize,
) -> Result<ScheduledScore, ScoreError> {
    if !(control_rate_hz > 0.0) {
        return Err(ScoreError::NonPositiveRate(control_rate_hz));
    }
    let mut hands: Vec<Vec<ScheduledHit>> = vec![Vec::new(); assignment.n_hand];
    for e in &score.events {
        let hand = assignment
            .hand_of(e.drum)
            .ok_or(ScoreError::UnassignedDrum(e.drum))?;
        let step = (e.time_s * control_rate_hz).round().max(0.0) as usize;
        let lane = &mut hands[hand];
        match lane.last() {
            Some(prev) if prev.step == step && prev.drum == e.drum => {}
            Some(prev) if prev.step == step => {
                return Err(ScoreError::SameHandCollision {
                    hand,
                    step,
                    first: prev.drum,
                    second: e.drum,
                })
            }
            _ => lane.push(ScheduledHit { step, drum: e.drum }),
        }
    }
    Ok(ScheduledScore {
        hands,
        window_halfwidth_steps,
        control_rate_hz,
    })
}
