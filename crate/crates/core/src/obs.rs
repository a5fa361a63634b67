//! Flat observation vector and its index map.

use std::ops::Range;

use serde::Deserialize;

use crate::choreography::ReferenceTrajectory;
use crate::reward::HitTracker;
use crate::score::DrumId;
use crate::world::WorldState;

/// Per-hand arm block: wrist position and velocity.
pub const ARM_DIM: usize = 6;
/// Per-hand hand block: five closures and their rates.
pub const HAND_DIM: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ObsBlock {
    pub name: String,
    pub range: Range<usize>,
    pub noisy: bool,
}

/// Named, contiguous, non-overlapping ranges covering the whole vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsLayout {
    pub n_hand: usize,
    pub d_arm: usize,
    pub d_hand: usize,
    pub lookahead: usize,
    pub blocks: Vec<ObsBlock>,
}

impl ObsLayout {
    pub fn new(n_hand: usize, d_arm: usize, d_hand: usize, lookahead: usize) -> Self {
        let mut blocks = Vec::new();
        let mut at = 0;
        let mut push = |name: String, len: usize, noisy: bool| {
            blocks.push(ObsBlock {
                name,
                range: at..at + len,
                noisy,
            });
            at += len;
        };
        for h in 0..n_hand {
            push(format!("arm{h}"), d_arm, true);
        }
        for h in 0..n_hand {
            push(format!("hand{h}"), d_hand, true);
        }
        for h in 0..n_hand {
            push(format!("stick{h}"), 6, true);
        }
        for h in 0..n_hand {
            push(format!("plan{h}"), 6 * lookahead, false);
        }
        for h in 0..n_hand {
            push(format!("grasped{h}"), 1, false);
        }
        push("prev_drum".into(), DrumId::COUNT, false);
        push("next_drum".into(), DrumId::COUNT, false);
        push("time_to_next".into(), 1, false);
        Self {
            n_hand,
            d_arm,
            d_hand,
            lookahead,
            blocks,
        }
    }

    /// Layout of the reduced world's proprioception.
    pub fn reduced(n_hand: usize, lookahead: usize) -> Self {
        Self::new(n_hand, ARM_DIM, HAND_DIM, lookahead)
    }

    pub fn len(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.range.end)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block(&self, name: &str) -> Option<Range<usize>> {
        self.blocks.iter().find(|b| b.name == name).map(|b| b.range.clone())
    }

    pub fn noisy_ranges(&self) -> Vec<Range<usize>> {
        self.blocks.iter().filter(|b| b.noisy).map(|b| b.range.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObsConfig {
    pub lookahead: usize,
    /// Value of the time-to-next-hit entry when no hit is pending, s.
    pub time_horizon_s: f64,
}

impl Default for ObsConfig {
    fn default() -> Self {
        Self {
            lookahead: 10,
            time_horizon_s: 2.0,
        }
    }
}

/// Fills `out` (length `layout.len()`) for control step `step`. Plan points
/// are given relative to the current head and tail.
pub fn build_observation(
    state: &WorldState,
    reference: &ReferenceTrajectory,
    tracker: &HitTracker,
    step: usize,
    layout: &ObsLayout,
    cfg: &ObsConfig,
    out: &mut [f64],
) {
    assert_eq!(layout.d_arm, ARM_DIM);
    assert_eq!(layout.d_hand, HAND_DIM);
    assert_eq!(out.len(), layout.len());
    let n = layout.n_hand;
    let blocks = &layout.blocks;
    for (h, hw) in state.hands.iter().enumerate() {
        let arm = &mut out[blocks[h].range.clone()];
        arm[..3].copy_from_slice(hw.hand.wrist_pos.as_slice());
        arm[3..].copy_from_slice(hw.hand.wrist_vel.as_slice());

        let hand = &mut out[blocks[n + h].range.clone()];
        hand[..5].copy_from_slice(&hw.hand.closure);
        hand[5..].copy_from_slice(&hw.hand.closure_vel);

        let stick = &mut out[blocks[2 * n + h].range.clone()];
        stick[..3].copy_from_slice(hw.stick.head_pos.as_slice());
        stick[3..].copy_from_slice(hw.stick.tail_pos.as_slice());

        let plan = &mut out[blocks[3 * n + h].range.clone()];
        for k in 0..layout.lookahead {
            let (rh, rt) = reference.at(h, step + 1 + k);
            let dh = rh - hw.stick.head_pos;
            let dt = rt - hw.stick.tail_pos;
            plan[6 * k..6 * k + 3].copy_from_slice(dh.as_slice());
            plan[6 * k + 3..6 * k + 6].copy_from_slice(dt.as_slice());
        }

        out[blocks[4 * n + h].range.start] = if hw.hand.stick_held { 1.0 } else { 0.0 };
    }
    let (prev, next) = tracker.prev_next(step);
    let prev_r = blocks[5 * n].range.clone();
    let next_r = blocks[5 * n + 1].range.clone();
    out[prev_r.clone()].fill(0.0);
    out[next_r.clone()].fill(0.0);
    out[prev_r.start + prev.map_or(DrumId::None, |p| p.1).index()] = 1.0;
    out[next_r.start + next.map_or(DrumId::None, |p| p.1).index()] = 1.0;
    let t = match next {
        Some((s, _)) => (s.saturating_sub(step) as f64 / reference.control_rate_hz).min(cfg.time_horizon_s),
        None => cfg.time_horizon_s,
    };
    out[blocks[5 * n + 2].range.start] = t;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_length() {
        assert_eq!(ObsLayout::new(2, 7, 20, 10).len(), 203);
        let l = ObsLayout::reduced(1, 10);
        assert_eq!(l.len(), 6 + 10 + 6 + 60 + 1 + 15);
    }

    #[test]
    fn blocks_tile_the_vector() {
        for n in 1..=2 {
            for lookahead in [0, 1, 10] {
                let l = ObsLayout::reduced(n, lookahead);
                let mut owner = vec![0usize; l.len()];
                for b in &l.blocks {
                    for i in b.range.clone() {
                        owner[i] += 1;
                    }
                }
                assert!(owner.iter().all(|&c| c == 1));
            }
        }
    }

    #[test]
    fn noisy_blocks_are_proprio_and_stick() {
        let l = ObsLayout::reduced(1, 10);
        assert_eq!(l.noisy_ranges(), vec![0..6, 6..16, 16..22]);
    }
}
