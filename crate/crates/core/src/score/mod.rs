//! Drum scores: MIDI ingestion, kit remapping, retiming, exercise synthesis
//! and discretization onto the control grid.

mod drum;
pub mod smf;
mod schedule;

pub use drum::{map_percussion, DrumId, KitLayout};
pub use schedule::{schedule, HandMap, ScheduledHit, ScheduledScore};
pub use smf::{parse_smf, parse_smf_with_layout};

use std::fmt::Write as _;

use thiserror::Error;

/// Lead-in before the first exercise hit, in seconds.
pub const DEFAULT_LEAD_IN_S: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("malformed SMF header: {0}")]
    MalformedHeader(String),
    #[error("unsupported SMF format {0}")]
    UnsupportedFormat(u16),
    #[error("track {track} truncated at byte {offset}")]
    TruncatedTrack { track: usize, offset: usize },
    #[error("variable-length quantity longer than 4 bytes at byte {0}")]
    BadVarint(usize),
    #[error("slowdown factor must be positive, got {0}")]
    NonPositiveFactor(f64),
    #[error("tempo must be positive, got {0} bpm")]
    NonPositiveBpm(f64),
    #[error("exercise needs at least one hit")]
    NoHits,
    #[error("control rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("drum {0:?} is not assigned to any hand")]
    UnassignedDrum(DrumId),
    #[error("hand {hand} asked to play {first:?} and {second:?} at step {step}")]
    SameHandCollision {
        hand: usize,
        step: usize,
        first: DrumId,
        second: DrumId,
    },
    #[error("score text line {line}: {msg}")]
    BadText { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrumEvent {
    pub time_s: f64,
    pub drum: DrumId,
    pub velocity: u8,
}

/// A timed sequence of drum hits.
#[derive(Debug, Clone, PartialEq)]
pub struct DrumScore {
    pub events: Vec<DrumEvent>,
    pub duration_s: f64,
    /// Informational only.
    pub bpm: f64,
}

impl DrumScore {
    /// Builds a score, sorting events by time and growing the duration to
    /// cover the last event.
    pub fn new(mut events: Vec<DrumEvent>, duration_s: f64, bpm: f64) -> Self {
        events.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
        let last = events.last().map_or(0.0, |e| e.time_s);
        Self {
            events,
            duration_s: duration_s.max(last),
            bpm,
        }
    }

    pub fn drums(&self) -> Vec<DrumId> {
        let mut seen = Vec::new();
        for e in &self.events {
            if !seen.contains(&e.drum) {
                seen.push(e.drum);
            }
        }
        seen
    }

    /// Drops every event on `drum` (e.g. the kick, which no hand plays).
    pub fn without(&self, drum: DrumId) -> Self {
        Self {
            events: self.events.iter().copied().filter(|e| e.drum != drum).collect(),
            ..self.clone()
        }
    }

    /// Keeps only events strictly before `t_s`.
    pub fn truncated(&self, t_s: f64) -> Self {
        Self {
            events: self.events.iter().copied().filter(|e| e.time_s < t_s).collect(),
            duration_s: self.duration_s.min(t_s),
            bpm: self.bpm,
        }
    }

    /// `time_s<TAB>drum<TAB>velocity`, one event per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let _ = writeln!(out, "{:.6}\t{}\t{}", e.time_s, e.drum.name(), e.velocity);
        }
        out
    }

    /// Inverse of [`DrumScore::to_text`]. Blank lines and `#` comments are skipped.
    pub fn from_text(text: &str, bpm: f64) -> Result<Self, ScoreError> {
        let mut events = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| ScoreError::BadText {
                line: i + 1,
                msg: msg.to_string(),
            };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(bad("expected three tab-separated columns"));
            }
            let time_s: f64 = cols[0].parse().map_err(|_| bad("bad time"))?;
            let drum = DrumId::from_name(cols[1]).ok_or_else(|| bad("unknown drum"))?;
            let velocity: u8 = cols[2].parse().map_err(|_| bad("bad velocity"))?;
            if !(1..=127).contains(&velocity) || drum == DrumId::None || time_s < 0.0 {
                return Err(bad("value out of range"));
            }
            events.push(DrumEvent {
                time_s,
                drum,
                velocity,
            });
        }
        Ok(Self::new(events, 0.0, bpm))
    }
}

/// Stretches every event time and the duration by `slowdown`.
pub fn retime(score: &DrumScore, slowdown: f64) -> Result<DrumScore, ScoreError> {
    if !(slowdown > 0.0) || !slowdown.is_finite() {
        return Err(ScoreError::NonPositiveFactor(slowdown));
    }
    Ok(DrumScore {
        events: score
            .events
            .iter()
            .map(|e| DrumEvent {
                time_s: e.time_s * slowdown,
                ..*e
            })
            .collect(),
        duration_s: score.duration_s * slowdown,
        bpm: score.bpm / slowdown,
    })
}

/// `n_hits` evenly spaced strokes on one drum, one per beat.
pub fn generate_exercise(
    bpm: f64,
    n_hits: usize,
    drum: DrumId,
    lead_in_s: f64,
) -> Result<DrumScore, ScoreError> {
    if !(bpm > 0.0) || !bpm.is_finite() {
        return Err(ScoreError::NonPositiveBpm(bpm));
    }
    if n_hits == 0 {
        return Err(ScoreError::NoHits);
    }
    let interval = 60.0 / bpm;
    let events = (0..n_hits)
        .map(|i| DrumEvent {
            time_s: lead_in_s + i as f64 * interval,
            drum,
            velocity: 100,
        })
        .collect();
    Ok(DrumScore::new(events, lead_in_s + n_hits as f64 * interval, bpm))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(t: f64, drum: DrumId) -> DrumEvent {
        DrumEvent {
            time_s: t,
            drum,
            velocity: 90,
        }
    }

    #[test]
    fn retime_by_three() {
        let s = DrumScore::new(vec![ev(1.0, DrumId::Snare)], 2.0, 120.0);
        let r = retime(&s, 3.0).unwrap();
        assert_eq!(r.events[0].time_s, 3.0);
        assert_eq!(r.duration_s, 6.0);
    }

    #[test]
    fn retime_identity_and_doubling() {
        let s = DrumScore::new(vec![ev(0.5, DrumId::Snare), ev(1.0, DrumId::HiHat)], 1.5, 100.0);
        assert_eq!(retime(&s, 1.0).unwrap().events, s.events);
        let d = retime(&s, 2.0).unwrap();
        let times: Vec<f64> = d.events.iter().map(|e| e.time_s).collect();
        assert_eq!(times, vec![1.0, 2.0]);
        assert_eq!(d.duration_s, 3.0);
        assert_eq!(d.events[1].drum, DrumId::HiHat);
    }

    #[test]
    fn retime_rejects_bad_factor() {
        let s = DrumScore::new(vec![], 1.0, 120.0);
        assert_eq!(retime(&s, 0.0), Err(ScoreError::NonPositiveFactor(0.0)));
        assert!(retime(&s, -2.0).is_err());
    }

    #[test]
    fn exercise_spacing() {
        let s = generate_exercise(240.0, 4, DrumId::Snare, 0.0).unwrap();
        assert!((s.events[1].time_s - s.events[0].time_s - 0.25).abs() < 1e-12);

        let s = generate_exercise(60.0, 3, DrumId::Snare, 1.0).unwrap();
        let times: Vec<f64> = s.events.iter().map(|e| e.time_s).collect();
        assert_eq!(times, vec![1.0, 2.0, 3.0]);

        let s = generate_exercise(90.0, 1, DrumId::Tom, 1.0).unwrap();
        assert_eq!(s.events.len(), 1);
        assert_eq!(s.events[0].time_s, 1.0);

        assert_eq!(
            generate_exercise(0.0, 3, DrumId::Snare, 1.0),
            Err(ScoreError::NonPositiveBpm(0.0))
        );
    }

    #[test]
    fn text_round_trip() {
        let s = DrumScore::new(vec![ev(0.25, DrumId::Crash), ev(1.5, DrumId::Snare)], 2.0, 120.0);
        let back = DrumScore::from_text(&s.to_text(), 120.0).unwrap();
        assert_eq!(back.events, s.events);
        assert!(DrumScore::from_text("0.1\tcowbell\t3\n", 120.0).is_err());
    }
}
