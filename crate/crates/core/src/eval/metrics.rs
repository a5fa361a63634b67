use thiserror::Error;

use super::trace::{EpisodeTrace, PlayedHit};
use crate::score::ScheduledScore;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("empty trace")]
    EmptyTrace,
    #[error("trace and reference lengths differ")]
    LengthMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

impl F1Score {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            true_pos: tp,
            false_pos: fp,
            false_neg: fn_,
        }
    }
}

/// One-to-one matching of played to scheduled hits of the same hand and drum
/// within +-`window` steps. Played hits are taken in time order and each
/// claims the earliest open scheduled hit it can reach, which is a maximum
/// matching for equal-width windows on a line.
pub fn f1_score(played: &[PlayedHit], scheduled: &ScheduledScore, window: usize) -> F1Score {
    let mut played = played.to_vec();
    played.sort_by_key(|p| (p.step, p.hand, p.drum));
    let mut used: Vec<Vec<bool>> = scheduled.hands.iter().map(|h| vec![false; h.len()]).collect();
    let mut tp = 0;
    for p in &played {
        let Some(lane) = scheduled.hands.get(p.hand) else {
            continue;
        };
        let found = lane
            .iter()
            .enumerate()
            .find(|(i, s)| !used[p.hand][*i] && s.drum == p.drum && s.step + window >= p.step && s.step <= p.step + window);
        if let Some((i, _)) = found {
            used[p.hand][i] = true;
            tp += 1;
        }
    }
    let total = scheduled.total_hits();
    F1Score::from_counts(tp, played.len() - tp, total - tp)
}

pub fn hold_ratio(held: &[bool]) -> Result<f64, MetricError> {
    if held.is_empty() {
        return Err(MetricError::EmptyTrace);
    }
    Ok(held.iter().filter(|h| **h).count() as f64 / held.len() as f64)
}

/// Mean over held steps (and hands) of the mean head/tail error; 0 when the
/// stick was never held.
pub fn trajectory_error(trace: &EpisodeTrace) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for hands in &trace.steps {
        for r in hands.iter().filter(|r| r.held) {
            sum += 0.5 * ((r.head - r.ref_head).norm() + (r.tail - r.ref_tail).norm());
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Sum over steps and hands of |force| + |wrist velocity|.
pub fn energy(trace: &EpisodeTrace) -> f64 {
    trace
        .steps
        .iter()
        .flatten()
        .map(|r| r.arm_force.norm() + r.wrist_vel.norm())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeMetrics {
    pub f1: F1Score,
    pub hold_ratio_per_hand: Vec<f64>,
    pub hold_ratio: f64,
    pub trajectory_error: f64,
    pub energy: f64,
}

pub fn episode_metrics(trace: &EpisodeTrace, scheduled: &ScheduledScore) -> Result<EpisodeMetrics, MetricError> {
    if trace.steps.is_empty() {
        return Err(MetricError::EmptyTrace);
    }
    let per_hand = (0..trace.n_hand())
        .map(|h| {
            let flags: Vec<bool> = trace.steps.iter().map(|s| s[h].held).collect();
            hold_ratio(&flags)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mean = per_hand.iter().sum::<f64>() / per_hand.len() as f64;
    Ok(EpisodeMetrics {
        f1: f1_score(&trace.hits, scheduled, scheduled.window_halfwidth_steps),
        hold_ratio: mean,
        hold_ratio_per_hand: per_hand,
        trajectory_error: trajectory_error(trace),
        energy: energy(trace),
    })
}
