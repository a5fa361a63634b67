use serde::Deserialize;

use super::WorldError;
use crate::choreography::{DrumLayout, Vec3};

/// Numeric constants of the world. Every field can be overridden from the
/// `[world]` section of a run config.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    pub control_rate_hz: f64,
    pub controller_substeps: usize,
    pub physics_substeps: usize,

    pub stick_length: f64,
    pub stick_mass: f64,
    /// Fulcrum position from the head, as a fraction of the stick length.
    pub grasp_fraction: f64,
    /// Finger and palm inertia added to the stick's pitch axis, kg m^2.
    pub hand_inertia: f64,

    pub wrist_mass: f64,
    pub kp: f64,
    pub kd: f64,
    pub closure_tau: f64,

    pub grasp_stiffness: f64,
    pub grasp_damping: f64,
    /// Pitch change per unit of (last-three minus thumb-index) closure, rad.
    pub pitch_gain: f64,

    pub contact_stiffness: f64,
    pub contact_damping: f64,

    pub k_slip: f64,
    pub k_rec: f64,
    pub grip_drop_threshold: f64,

    pub nominal_closure: f64,
    pub fingertip_open_offset: f64,
    pub fingertip_contact_tol: f64,
    pub hit_speed_threshold: f64,
    pub action_clip: f64,
    pub free_drag: f64,

    pub randomize: bool,
    pub obs_noise_std: f64,
    pub friction_noise: f64,
    pub gain_scale_min: f64,
    pub gain_scale_max: f64,

    pub curriculum_active: bool,
    pub curriculum_steps: u64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            control_rate_hz: 20.0,
            controller_substeps: 5,
            physics_substeps: 5,
            stick_length: 0.4,
            stick_mass: 0.05,
            grasp_fraction: 2.0 / 3.0,
            hand_inertia: 0.001,
            wrist_mass: 1.0,
            kp: 1000.0,
            kd: 44.0,
            closure_tau: 0.04,
            grasp_stiffness: 1.5,
            grasp_damping: 0.06,
            pitch_gain: 1.5,
            contact_stiffness: 5000.0,
            contact_damping: 50.0,
            k_slip: 8.0,
            k_rec: 0.01,
            grip_drop_threshold: 0.2,
            nominal_closure: 0.9,
            fingertip_open_offset: 0.04,
            fingertip_contact_tol: 0.002,
            hit_speed_threshold: 0.2,
            action_clip: 0.05,
            free_drag: 0.5,
            randomize: true,
            obs_noise_std: 0.05,
            friction_noise: 0.2,
            gain_scale_min: 0.9,
            gain_scale_max: 1.1,
            curriculum_active: true,
            curriculum_steps: 10_000,
        }
    }
}

impl PhysicsConfig {
    pub fn physics_dt(&self) -> f64 {
        1.0 / (self.control_rate_hz * (self.controller_substeps * self.physics_substeps) as f64)
    }

    /// Fulcrum to centre of mass, toward the head.
    pub fn cm_offset(&self) -> f64 {
        (self.grasp_fraction - 0.5) * self.stick_length
    }

    pub fn pitch_inertia(&self) -> f64 {
        let d = self.cm_offset();
        self.stick_mass * (self.stick_length.powi(2) / 12.0 + d * d) + self.hand_inertia
    }
}

/// Starting pose of one hand.
#[derive(Debug, Clone, PartialEq)]
pub struct HandInit {
    pub wrist: Vec3,
    pub yaw: f64,
    pub pitch: f64,
}

impl HandInit {
    /// Pose whose held stick puts the head at `head`.
    pub fn holding_head(head: Vec3, yaw: f64, pitch: f64, p: &PhysicsConfig) -> Self {
        let u = crate::choreography::PlanConfig::stick_axis(yaw, pitch);
        Self {
            wrist: head - u * (p.grasp_fraction * p.stick_length),
            yaw,
            pitch,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub physics: PhysicsConfig,
    pub layout: DrumLayout,
    pub hands: Vec<HandInit>,
}

impl WorldConfig {
    pub fn n_hand(&self) -> usize {
        self.hands.len()
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let p = &self.physics;
        let bad = |m: &str| Err(WorldError::BadConfig(m.to_string()));
        if self.hands.is_empty() || self.hands.len() > 2 {
            return bad("one or two hands required");
        }
        if self.layout.pads().next().is_none() {
            return bad("layout has no drums");
        }
        if !(p.control_rate_hz > 0.0) || p.controller_substeps == 0 || p.physics_substeps == 0 {
            return bad("rates and substep counts must be positive");
        }
        if !(p.grasp_fraction > 0.0 && p.grasp_fraction < 1.0) {
            return bad("grasp_fraction must lie in (0, 1)");
        }
        let positive = [
            p.stick_length,
            p.stick_mass,
            p.wrist_mass,
            p.kp,
            p.closure_tau,
            p.nominal_closure,
            p.action_clip,
        ];
        if positive.iter().any(|x| !(*x > 0.0)) {
            return bad("lengths, masses, gains and clip must be positive");
        }
        if p.gain_scale_min > p.gain_scale_max || p.friction_noise < 0.0 || p.obs_noise_std < 0.0 {
            return bad("randomization ranges are inverted");
        }
        if p.friction_noise >= 1.0 {
            return bad("friction noise must keep the friction scale positive");
        }
        Ok(())
    }
}
