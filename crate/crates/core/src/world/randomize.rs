use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::PhysicsConfig;

/// Per-episode physical parameters drawn at reset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsParams {
    /// 1 + friction offset; scales how much grip an impulse costs.
    pub friction_scale: f64,
    pub gain_scale: f64,
}

impl PhysicsParams {
    pub fn nominal() -> Self {
        Self {
            friction_scale: 1.0,
            gain_scale: 1.0,
        }
    }

    pub fn friction_offset(&self) -> f64 {
        self.friction_scale - 1.0
    }
}

pub fn sample_episode_physics<R: Rng>(cfg: &PhysicsConfig, rng: &mut R) -> PhysicsParams {
    if !cfg.randomize {
        return PhysicsParams::nominal();
    }
    let offset = if cfg.friction_noise > 0.0 {
        rng.random_range(-cfg.friction_noise..=cfg.friction_noise)
    } else {
        0.0
    };
    let gain = if cfg.gain_scale_max > cfg.gain_scale_min {
        rng.random_range(cfg.gain_scale_min..=cfg.gain_scale_max)
    } else {
        cfg.gain_scale_min
    };
    PhysicsParams {
        friction_scale: 1.0 + offset,
        gain_scale: gain,
    }
}

/// Adds independent Gaussian noise to the given index ranges of `obs`.
/// Leaves `obs` untouched when randomization is off.
pub fn apply_observation_noise<R: Rng>(
    obs: &mut [f64],
    noisy: &[Range<usize>],
    cfg: &PhysicsConfig,
    rng: &mut R,
) {
    if !cfg.randomize || cfg.obs_noise_std == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, cfg.obs_noise_std).expect("std is non-negative");
    for r in noisy {
        for x in &mut obs[r.clone()] {
            *x += normal.sample(rng);
        }
    }
}
