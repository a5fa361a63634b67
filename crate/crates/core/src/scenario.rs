//! Built-in scores and tasks: single-drum exercises, the easy loop, two-drum
//! letter sequences, and a handful of genre grooves.

use std::sync::Arc;

use serde::Deserialize;

use crate::choreography::{AssignmentRule, DrumLayout};
use crate::env::{EnvError, Task, TaskSpec};
use crate::score::{generate_exercise, DrumEvent, DrumId, DrumScore, ScoreError, DEFAULT_LEAD_IN_S};
use crate::world::PhysicsConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Single snare, one hand.
    Exercise,
    /// Single snare, one hand, fixed episode length.
    EasyLoop,
    /// Snare and hi-hat, one hand.
    TwoDrum,
    /// Full kit without the kick, two hands.
    BimanualSong,
}

impl ScenarioKind {
    pub fn spec(self, physics: &PhysicsConfig) -> TaskSpec {
        match self {
            ScenarioKind::Exercise | ScenarioKind::EasyLoop => {
                TaskSpec::unimanual(DrumLayout::single_snare(), physics.clone())
            }
            ScenarioKind::TwoDrum => TaskSpec::unimanual(DrumLayout::two_drum(), physics.clone()),
            ScenarioKind::BimanualSong => {
                let mut spec = TaskSpec::bimanual(DrumLayout::full_kit(), physics.clone());
                spec.rule = AssignmentRule::StaticBySide;
                spec
            }
        }
    }
}

/// Strokes that fit in `n_steps` at `bpm` after the lead-in, keeping at
/// least half a second of tail.
pub fn loop_hits(n_steps: usize, bpm: f64, control_rate_hz: f64) -> usize {
    let seconds = n_steps as f64 / control_rate_hz;
    (((seconds - DEFAULT_LEAD_IN_S - 0.5) * bpm / 60.0).floor() as usize).max(1)
}

/// Snare strokes, one per beat, played by one hand.
pub fn exercise_task(bpm: f64, n_hits: usize, physics: &PhysicsConfig) -> Result<Arc<Task>, EnvError> {
    let score = generate_exercise(bpm, n_hits, DrumId::Snare, DEFAULT_LEAD_IN_S)?;
    let spec = ScenarioKind::Exercise.spec(physics);
    Ok(Arc::new(Task::build(&format!("exercise_{bpm}"), score, &spec)?))
}

/// One snare stroke per second for `n_steps` control steps.
pub fn easy_loop_task(n_steps: usize, physics: &PhysicsConfig) -> Result<Arc<Task>, EnvError> {
    let n_hits = loop_hits(n_steps, 60.0, physics.control_rate_hz);
    let score = generate_exercise(60.0, n_hits, DrumId::Snare, DEFAULT_LEAD_IN_S)?;
    let mut spec = ScenarioKind::EasyLoop.spec(physics);
    spec.n_steps = Some(n_steps);
    Ok(Arc::new(Task::build("easy_loop", score, &spec)?))
}

/// Letters `c` (snare) and `d` (hi-hat), one per beat.
pub fn letter_score(pattern: &str, bpm: f64) -> Result<DrumScore, ScoreError> {
    if !(bpm > 0.0) || !bpm.is_finite() {
        return Err(ScoreError::NonPositiveBpm(bpm));
    }
    let beat = 60.0 / bpm;
    let mut events = Vec::new();
    for (i, ch) in pattern.chars().enumerate() {
        let drum = match ch {
            'c' => DrumId::Snare,
            'd' => DrumId::HiHat,
            _ => {
                return Err(ScoreError::BadText {
                    line: 1,
                    msg: format!("unknown letter {ch:?}"),
                })
            }
        };
        events.push(DrumEvent {
            time_s: DEFAULT_LEAD_IN_S + i as f64 * beat,
            drum,
            velocity: 100,
        });
    }
    if events.is_empty() {
        return Err(ScoreError::NoHits);
    }
    let n = events.len() as f64;
    Ok(DrumScore::new(events, DEFAULT_LEAD_IN_S + n * beat, bpm))
}

/// A letter sequence on the two-drum kit, played by one hand.
pub fn sequence_task(pattern: &str, bpm: f64, physics: &PhysicsConfig) -> Result<Arc<Task>, EnvError> {
    let score = letter_score(pattern, bpm)?;
    Ok(Arc::new(Task::build(pattern, score, &ScenarioKind::TwoDrum.spec(physics))?))
}

pub const GENRES: [&str; 6] = ["rock", "funk", "jazz", "hiphop", "disco", "bossa"];

/// A few bars of a genre groove on the stick-played drums. Times are in
/// seconds at the given tempo; eighth-note grid.
pub fn genre_score(genre: &str, bpm: f64, bars: usize) -> Option<DrumScore> {
    use DrumId::{Crash, HiHat, Ride, Snare, Tom};
    // (eighth index within a 4/4 bar, drum)
    let bar: &[(usize, DrumId)] = match genre {
        "rock" => &[(0, HiHat), (1, HiHat), (2, Snare), (3, HiHat), (4, HiHat), (5, HiHat), (6, Snare), (7, HiHat)],
        "funk" => &[(0, HiHat), (1, Snare), (2, Snare), (3, HiHat), (5, Snare), (6, Snare), (7, HiHat)],
        "jazz" => &[(0, Ride), (2, Ride), (3, Ride), (4, Ride), (6, Ride), (7, Ride), (2, HiHat), (6, HiHat)],
        "hiphop" => &[(0, HiHat), (2, Snare), (4, HiHat), (5, HiHat), (6, Snare)],
        "disco" => &[(1, HiHat), (2, Snare), (3, HiHat), (5, HiHat), (6, Snare), (7, HiHat), (0, Crash)],
        "bossa" => &[(0, Ride), (1, Ride), (2, Tom), (3, Ride), (4, Ride), (5, Tom), (6, Ride), (7, Ride)],
        _ => return None,
    };
    let eighth = 30.0 / bpm;
    let mut events = Vec::new();
    for b in 0..bars {
        for &(i, drum) in bar {
            events.push(DrumEvent {
                time_s: DEFAULT_LEAD_IN_S + (b * 8 + i) as f64 * eighth,
                drum,
                velocity: 100,
            });
        }
    }
    Some(DrumScore::new(events, DEFAULT_LEAD_IN_S + (bars * 8) as f64 * eighth, bpm))
}

/// Full-kit two-hand task. Cymbals left of the midline go to hand 0.
pub fn song_task(name: &str, score: DrumScore, physics: &PhysicsConfig) -> Result<Arc<Task>, EnvError> {
    let spec = ScenarioKind::BimanualSong.spec(physics);
    Ok(Arc::new(Task::build(name, score.without(DrumId::Kick), &spec)?))
}
