//! Per-step reward terms and the episode hit tracker.

use serde::Deserialize;
use thiserror::Error;

use crate::choreography::{ReferenceTrajectory, Vec3};
use crate::score::{DrumId, ScheduledScore};
use crate::world::{fingertip_positions, ContactEvents, Finger, WorldConfig, WorldState};

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("shaping sigma must be positive, got {0}")]
    NonPositiveSigma(f64),
}

/// Gaussian shaping exp(-(d/sigma)^2 / 2).
pub fn shaping_g(d: f64, sigma: f64) -> Result<f64, RewardError> {
    if !(sigma > 0.0) {
        return Err(RewardError::NonPositiveSigma(sigma));
    }
    Ok(gauss(d, sigma))
}

fn gauss(d: f64, sigma: f64) -> f64 {
    let r = d / sigma;
    (-0.5 * r * r).exp()
}

pub fn fingertip_reward(n_contacts: usize, epsilon: f64) -> f64 {
    (-1.0 / (n_contacts as f64 + epsilon)).exp()
}

pub fn fulcrum_reward(thumb: &Vec3, index: &Vec3, fulcrum: &Vec3, sigma: f64) -> f64 {
    let d = 0.5 * ((thumb - fulcrum).norm() + (index - fulcrum).norm());
    gauss(d, sigma)
}

pub fn arm_penalty(tau: &Vec3, v: &Vec3) -> f64 {
    tau.norm() + v.norm()
}

pub fn trajectory_reward(
    is_grasped: bool,
    head: &Vec3,
    tail: &Vec3,
    ref_head: &Vec3,
    ref_tail: &Vec3,
    sigma: f64,
) -> f64 {
    if !is_grasped {
        return 0.0;
    }
    let e = 0.5 * ((head - ref_head).norm() + (tail - ref_tail).norm());
    gauss(e, sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub fingertip: f64,
    pub fulcrum: f64,
    /// Magnitude of the arm penalty weight; it is subtracted.
    pub arm: f64,
    pub trajectory: f64,
    pub hit: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            fingertip: 1.0,
            fulcrum: 1.0,
            arm: 0.03,
            trajectory: 2.0,
            hit: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub weights: RewardWeights,
    pub fulcrum_sigma: f64,
    pub trajectory_sigma: f64,
    pub epsilon: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            weights: RewardWeights::default(),
            fulcrum_sigma: 0.05,
            trajectory_sigma: 0.05,
            epsilon: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardBreakdown {
    pub fingertip: f64,
    pub fulcrum: f64,
    pub arm_penalty: f64,
    pub trajectory: f64,
    pub drum_hit: f64,
    pub weighted_total: f64,
}

pub fn total_reward(parts: &RewardBreakdown, w: &RewardWeights) -> f64 {
    w.fingertip * parts.fingertip + w.fulcrum * parts.fulcrum - w.arm * parts.arm_penalty
        + w.trajectory * parts.trajectory
        + w.hit * parts.drum_hit
}

/// Per-episode record of which scheduled hits have been played.
#[derive(Debug, Clone, PartialEq)]
pub struct HitTracker {
    pub schedule: ScheduledScore,
    consumed: Vec<Vec<bool>>,
    /// Detected hits that matched nothing: (hand, step, drum).
    pub false_positives: Vec<(usize, usize, DrumId)>,
    /// Matched hits: (hand, scheduled step, detected step).
    pub matches: Vec<(usize, usize, usize)>,
}

impl HitTracker {
    pub fn new(schedule: ScheduledScore) -> Self {
        let consumed = schedule.hands.iter().map(|h| vec![false; h.len()]).collect();
        Self {
            schedule,
            consumed,
            false_positives: Vec::new(),
            matches: Vec::new(),
        }
    }

    pub fn window(&self) -> usize {
        self.schedule.window_halfwidth_steps
    }

    pub fn is_consumed(&self, hand: usize, i: usize) -> bool {
        self.consumed[hand][i]
    }

    pub fn n_consumed(&self) -> usize {
        self.consumed.iter().flatten().filter(|c| **c).count()
    }

    /// Matches detected hits at `step`; returns the hit reward (one per
    /// matched hand, so up to the number of hands).
    pub fn record(&mut self, hits: &[(usize, DrumId)], step: usize) -> f64 {
        let w = self.window();
        let mut reward = 0.0;
        for &(hand, drum) in hits {
            let lane = &self.schedule.hands[hand];
            let best = lane
                .iter()
                .enumerate()
                .filter(|(i, h)| !self.consumed[hand][*i] && h.drum == drum && h.step.abs_diff(step) <= w)
                .min_by_key(|(i, h)| (h.step.abs_diff(step), *i))
                .map(|(i, h)| (i, h.step));
            match best {
                Some((i, s)) => {
                    self.consumed[hand][i] = true;
                    self.matches.push((hand, s, step));
                    reward += 1.0;
                }
                None => self.false_positives.push((hand, step, drum)),
            }
        }
        reward
    }

    /// A scheduled hit is past once consumed or once its window has closed.
    fn is_past(&self, hand: usize, i: usize, step: usize) -> bool {
        self.consumed[hand][i] || self.schedule.hands[hand][i].step + self.window() < step
    }

    /// Most recent past hit over all hands, and the earliest pending one.
    pub fn prev_next(&self, step: usize) -> (Option<(usize, DrumId)>, Option<(usize, DrumId)>) {
        let mut prev: Option<(usize, DrumId)> = None;
        let mut next: Option<(usize, DrumId)> = None;
        for (hand, lane) in self.schedule.hands.iter().enumerate() {
            for (i, h) in lane.iter().enumerate() {
                if self.is_past(hand, i, step) {
                    if prev.is_none_or(|(s, _)| h.step > s) {
                        prev = Some((h.step, h.drum));
                    }
                } else if next.is_none_or(|(s, _)| h.step < s) {
                    next = Some((h.step, h.drum));
                }
            }
        }
        (prev, next)
    }
}

/// Control step a substep onset belongs to, given the step index before the
/// transition.
pub fn onset_step(step_before: usize, substep: usize, substeps_per_step: usize) -> usize {
    let frac = (substep + 1) as f64 / substeps_per_step as f64;
    step_before + frac.round() as usize
}

/// Scores one transition. `state` is the successor state; `step_before` the
/// control step the action was taken at. Shaped terms are averaged over
/// hands; hit rewards add up.
pub fn step_reward(
    state: &WorldState,
    events: &ContactEvents,
    reference: &ReferenceTrajectory,
    tracker: &mut HitTracker,
    step_before: usize,
    world: &WorldConfig,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    let p = &world.physics;
    let n = state.hands.len() as f64;
    let mut out = RewardBreakdown::default();
    let now = step_before + 1;
    for (h, hw) in state.hands.iter().enumerate() {
        out.fingertip += fingertip_reward(events.fingertip_contacts[h], cfg.epsilon) / n;
        let tips = fingertip_positions(hw, p);
        let station = hw.stick.head_pos + (hw.stick.tail_pos - hw.stick.head_pos) * p.grasp_fraction;
        out.fulcrum += fulcrum_reward(
            &tips[Finger::Thumb as usize],
            &tips[Finger::Index as usize],
            &station,
            cfg.fulcrum_sigma,
        ) / n;
        out.arm_penalty += arm_penalty(&hw.arm_force, &hw.hand.wrist_vel) / n;
        let (rh, rt) = reference.at(h, now);
        out.trajectory += trajectory_reward(
            hw.hand.stick_held,
            &hw.stick.head_pos,
            &hw.stick.tail_pos,
            &rh,
            &rt,
            cfg.trajectory_sigma,
        ) / n;
    }
    let n_sub = p.controller_substeps * p.physics_substeps;
    for c in &events.drum_contacts {
        if c.onset && c.tip_speed_at_impact >= p.hit_speed_threshold {
            let s = onset_step(step_before, c.substep, n_sub);
            out.drum_hit += tracker.record(&[(c.hand, c.drum)], s);
        }
    }
    out.weighted_total = total_reward(&out, &cfg.weights);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::ScheduledHit;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn shaping_values() {
        assert_eq!(shaping_g(0.0, 0.05).unwrap(), 1.0);
        assert!(close(shaping_g(0.05, 0.05).unwrap(), 0.606530659712633, 1e-12));
        assert!(close(shaping_g(0.15, 0.05).unwrap(), 0.011108996538242, 1e-12));
        assert_eq!(shaping_g(0.1, 0.0), Err(RewardError::NonPositiveSigma(0.0)));
    }

    #[test]
    fn fingertip_values() {
        assert!(fingertip_reward(0, 1e-6) < 1e-300);
        assert!(close(fingertip_reward(1, 1e-6), 0.367879809, 1e-8));
        assert!(close(fingertip_reward(5, 1e-6), 0.818730790, 1e-8));
    }

    #[test]
    fn fulcrum_values() {
        let f = Vec3::zeros();
        assert_eq!(fulcrum_reward(&f, &f, &f, 0.05), 1.0);
        let r = fulcrum_reward(&Vec3::new(0.04, 0.0, 0.0), &Vec3::new(0.0, 0.06, 0.0), &f, 0.05);
        assert!(close(r, (-0.5f64).exp(), 1e-12));
    }

    #[test]
    fn arm_values() {
        assert_eq!(arm_penalty(&Vec3::new(1.0, 2.0, 2.0), &Vec3::zeros()), 3.0);
        assert!(close(arm_penalty(&Vec3::zeros(), &Vec3::new(0.3, 0.4, 0.0)), 0.5, 1e-15));
    }

    #[test]
    fn trajectory_values() {
        let z = Vec3::zeros();
        let e = Vec3::new(0.05, 0.0, 0.0);
        assert_eq!(trajectory_reward(false, &z, &z, &z, &z, 0.05), 0.0);
        assert_eq!(trajectory_reward(true, &z, &z, &z, &z, 0.05), 1.0);
        assert!(close(trajectory_reward(true, &e, &z, &z, &z, 0.05), (-0.125f64).exp(), 1e-12));
    }

    #[test]
    fn weighted_total() {
        let w = RewardWeights::default();
        let parts = RewardBreakdown {
            trajectory: 1.0,
            arm_penalty: 3.0,
            ..Default::default()
        };
        assert!(close(total_reward(&parts, &w), 1.91, 1e-12));
    }

    fn tracker(steps: &[usize]) -> HitTracker {
        HitTracker::new(ScheduledScore {
            hands: vec![steps.iter().map(|&s| ScheduledHit { step: s, drum: DrumId::Snare }).collect()],
            window_halfwidth_steps: 2,
            control_rate_hz: 20.0,
        })
    }

    #[test]
    fn hit_window_and_consumption() {
        let mut t = tracker(&[40]);
        assert_eq!(t.record(&[(0, DrumId::Snare)], 43), 0.0);
        assert_eq!(t.record(&[(0, DrumId::HiHat)], 40), 0.0);
        assert_eq!(t.record(&[(0, DrumId::Snare)], 40), 1.0);
        assert_eq!(t.record(&[(0, DrumId::Snare)], 41), 0.0);
        assert_eq!(t.false_positives.len(), 3);
        assert_eq!(t.n_consumed(), 1);
    }

    #[test]
    fn nearest_scheduled_hit_is_consumed() {
        let mut t = tracker(&[10, 13]);
        assert_eq!(t.record(&[(0, DrumId::Snare)], 12), 1.0);
        assert!(t.is_consumed(0, 1));
        assert!(!t.is_consumed(0, 0));
    }

    #[test]
    fn prev_next_progression() {
        let mut t = tracker(&[10, 20]);
        assert_eq!(t.prev_next(0), (None, Some((10, DrumId::Snare))));
        t.record(&[(0, DrumId::Snare)], 10);
        assert_eq!(t.prev_next(11), (Some((10, DrumId::Snare)), Some((20, DrumId::Snare))));
        // missed hit becomes past once its window closes
        assert_eq!(t.prev_next(23).1, None);
    }

    #[test]
    fn onset_rounding() {
        assert_eq!(onset_step(7, 0, 25), 7);
        assert_eq!(onset_step(7, 11, 25), 7);
        assert_eq!(onset_step(7, 12, 25), 8);
        assert_eq!(onset_step(7, 24, 25), 8);
    }
}
