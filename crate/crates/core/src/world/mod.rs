//! Reduced hand-stick-drum world.
//!
//! Each hand is a PD-tracked wrist point carrying a drumstick pinned at the
//! fulcrum. The stick pitches about the fulcrum under gravity, a grasp spring
//! whose rest angle is set by the differential closure of the last three
//! fingers against thumb and index, and penalty-spring contact with the
//! drumheads. Integration is semi-implicit Euler with the stiff damping
//! terms taken implicitly.

mod config;
mod fingers;
mod randomize;

pub use config::{HandInit, PhysicsConfig, WorldConfig};
pub use fingers::{fingertip_positions, Finger};
pub use randomize::{apply_observation_noise, sample_episode_physics, PhysicsParams};

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::choreography::{PlanConfig, Vec3};
use crate::score::DrumId;

pub const GRAVITY: f64 = 9.81;
/// Joint limits on stick pitch, rad.
pub const PITCH_LIMITS: (f64, f64) = (-1.2, 0.9);
const FLOOR_Z: f64 = -0.8;

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("bad world config: {0}")]
    BadConfig(String),
    #[error("non-finite state in hand {hand} at step {step}")]
    NonFiniteState { hand: usize, step: u64 },
    #[error("action has {got} hands, world has {expected}")]
    ActionShape { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandState {
    pub wrist_pos: Vec3,
    pub wrist_vel: Vec3,
    /// thumb, index, middle, ring, little
    pub closure: [f64; 5],
    pub closure_vel: [f64; 5],
    pub grip: f64,
    pub stick_held: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StickState {
    pub head_pos: Vec3,
    pub tail_pos: Vec3,
    pub head_vel: Vec3,
    pub tail_vel: Vec3,
    pub pitch: f64,
    pub pitch_vel: f64,
}

/// Everything one hand owns in the world.
#[derive(Debug, Clone, PartialEq)]
pub struct HandWorld {
    pub hand: HandState,
    pub stick: StickState,
    pub yaw: f64,
    /// Pitch the grasp spring holds at equal closures.
    pub rest_pitch: f64,
    /// PD force on the wrist, standing in for arm joint torques.
    pub arm_force: Vec3,
    contact: Option<DrumId>,
    contact_record: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub hands: Vec<HandWorld>,
    pub episode_step: u64,
    pub global_step: u64,
    pub curriculum_contact_enabled: bool,
    pub physics: PhysicsParams,
    pub rng: ChaCha8Rng,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandAction {
    pub wrist_delta: Vec3,
    pub closure_targets: [f64; 5],
}

impl HandAction {
    pub const DIM: usize = 8;

    pub fn zero() -> Self {
        Self {
            wrist_delta: Vec3::zeros(),
            closure_targets: [0.0; 5],
        }
    }

    pub fn to_slice(&self, out: &mut [f64]) {
        out[..3].copy_from_slice(self.wrist_delta.as_slice());
        out[3..8].copy_from_slice(&self.closure_targets);
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let mut c = [0.0; 5];
        c.copy_from_slice(&v[3..8]);
        Self {
            wrist_delta: Vec3::new(v[0], v[1], v[2]),
            closure_targets: c,
        }
    }

    pub fn clipped(&self, clip: f64) -> Self {
        Self {
            wrist_delta: self.wrist_delta.map(|x| x.clamp(-clip, clip)),
            closure_targets: self.closure_targets.map(|c| c.clamp(0.0, 1.0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub hands: Vec<HandAction>,
}

impl Action {
    pub fn zero(n_hand: usize) -> Self {
        Self {
            hands: vec![HandAction::zero(); n_hand],
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.hands.len() * HandAction::DIM];
        for (h, a) in self.hands.iter().enumerate() {
            a.to_slice(&mut v[h * HandAction::DIM..(h + 1) * HandAction::DIM]);
        }
        v
    }

    pub fn from_vec(v: &[f64]) -> Self {
        Self {
            hands: v.chunks(HandAction::DIM).map(HandAction::from_slice).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrumContact {
    pub hand: usize,
    pub drum: DrumId,
    /// Total normal impulse delivered during this policy step, N s.
    pub normal_impulse: f64,
    /// Head speed into the drum at the onset substep, m/s.
    pub tip_speed_at_impact: f64,
    /// True when the contact began during this policy step.
    pub onset: bool,
    /// Physics substep index within the policy step of the onset (or 0).
    pub substep: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContactEvents {
    pub fingertip_contacts: Vec<usize>,
    pub drum_contacts: Vec<DrumContact>,
}

/// Strikes: contact onsets fast enough to count as a hit.
pub fn detect_hits(events: &ContactEvents, v_threshold: f64) -> Vec<(usize, DrumId)> {
    events
        .drum_contacts
        .iter()
        .filter(|c| c.onset && c.tip_speed_at_impact >= v_threshold)
        .map(|c| (c.hand, c.drum))
        .collect()
}

/// Enables stick-drum contact once `global_training_step` reaches `n`.
pub fn set_contact_curriculum(state: &mut WorldState, global_training_step: u64, n: u64) {
    state.global_step = global_training_step;
    state.curriculum_contact_enabled = global_training_step >= n;
}

pub fn reset(cfg: &WorldConfig, seed: u64) -> Result<WorldState, WorldError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let physics = sample_episode_physics(&cfg.physics, &mut rng);
    let p = &cfg.physics;
    let hands = cfg
        .hands
        .iter()
        .map(|init| {
            let hand = HandState {
                wrist_pos: init.wrist,
                wrist_vel: Vec3::zeros(),
                closure: [p.nominal_closure; 5],
                closure_vel: [0.0; 5],
                grip: 1.0,
                stick_held: true,
            };
            let mut hw = HandWorld {
                hand,
                stick: StickState {
                    head_pos: Vec3::zeros(),
                    tail_pos: Vec3::zeros(),
                    head_vel: Vec3::zeros(),
                    tail_vel: Vec3::zeros(),
                    pitch: init.pitch,
                    pitch_vel: 0.0,
                },
                yaw: init.yaw,
                rest_pitch: init.pitch,
                arm_force: Vec3::zeros(),
                contact: None,
                contact_record: None,
            };
            hw.update_held_stick(p);
            hw
        })
        .collect();
    let curriculum_contact_enabled = !p.curriculum_active || p.curriculum_steps == 0;
    Ok(WorldState {
        hands,
        episode_step: 0,
        global_step: 0,
        curriculum_contact_enabled,
        physics,
        rng,
    })
}

impl HandWorld {
    fn head_arm(p: &PhysicsConfig) -> f64 {
        p.grasp_fraction * p.stick_length
    }

    pub fn fulcrum(&self) -> Vec3 {
        self.hand.wrist_pos
    }

    fn axis(&self) -> Vec3 {
        PlanConfig::stick_axis(self.yaw, self.stick.pitch)
    }

    fn axis_dpitch(&self) -> Vec3 {
        let (s, c) = self.stick.pitch.sin_cos();
        Vec3::new(-s * self.yaw.cos(), -s * self.yaw.sin(), c)
    }

    fn update_held_stick(&mut self, p: &PhysicsConfig) {
        let a = Self::head_arm(p);
        let b = p.stick_length - a;
        let u = self.axis();
        let du = self.axis_dpitch() * self.stick.pitch_vel;
        let f = self.fulcrum();
        self.stick.head_pos = f + u * a;
        self.stick.tail_pos = f - u * b;
        self.stick.head_vel = self.hand.wrist_vel + du * a;
        self.stick.tail_vel = self.hand.wrist_vel - du * b;
    }

    /// 0 when fingers are open, 1 at the nominal grasp (capped above).
    fn hold_strength(&self, p: &PhysicsConfig) -> f64 {
        let ti = 0.5 * (self.hand.closure[0] + self.hand.closure[1]);
        self.hand.grip * (ti / p.nominal_closure).clamp(0.0, 1.2)
    }

    fn pitch_setpoint(&self, p: &PhysicsConfig) -> f64 {
        let c = &self.hand.closure;
        let mrl = (c[2] + c[3] + c[4]) / 3.0;
        let ti = 0.5 * (c[0] + c[1]);
        self.rest_pitch - p.pitch_gain * (mrl - ti)
    }

    /// Mechanical energy of the stick about a fixed fulcrum: rotational
    /// kinetic, gravity, and the grasp spring's stored energy.
    pub fn stick_energy(&self, p: &PhysicsConfig) -> f64 {
        let m = p.stick_mass;
        if self.hand.stick_held {
            let d = p.cm_offset();
            let hold = self.hold_strength(p);
            let th = self.stick.pitch;
            let e = th - self.pitch_setpoint(p);
            0.5 * p.pitch_inertia() * self.stick.pitch_vel.powi(2) + m * GRAVITY * d * th.sin() * (1.0 - hold)
                + 0.5 * hold * p.grasp_stiffness * e * e
        } else {
            let cm = (self.stick.head_pos + self.stick.tail_pos) * 0.5;
            let v = (self.stick.head_vel + self.stick.tail_vel) * 0.5;
            0.5 * m * v.norm_squared() + m * GRAVITY * cm.z
        }
    }
}

/// Advances one policy step: `controller_substeps` PD updates, each held for
/// `physics_substeps` integration steps.
pub fn step(
    state: &mut WorldState,
    action: &Action,
    cfg: &WorldConfig,
) -> Result<ContactEvents, WorldError> {
    if action.hands.len() != state.hands.len() {
        return Err(WorldError::ActionShape {
            expected: state.hands.len(),
            got: action.hands.len(),
        });
    }
    let p = &cfg.physics;
    let dt = p.physics_dt();
    let mut events = ContactEvents::default();
    let contact_on = state.curriculum_contact_enabled;
    let gain = state.physics.gain_scale;
    let friction = state.physics.friction_scale;

    for (h, hw) in state.hands.iter_mut().enumerate() {
        let act = action.hands[h].clipped(p.action_clip);
        let target = hw.hand.wrist_pos + act.wrist_delta;
        // Contact episodes carry across policy steps without re-triggering.
        hw.contact_record = None;
        let mut sub = 0usize;
        for _ in 0..p.controller_substeps {
            let force = (target - hw.hand.wrist_pos) * (p.kp * gain) - hw.hand.wrist_vel * (p.kd * gain);
            hw.arm_force = force;
            for _ in 0..p.physics_substeps {
                physics_substep(hw, h, &act, force, dt, cfg, contact_on, friction, sub, &mut events);
                sub += 1;
            }
        }
        let finite = hw.hand.wrist_pos.iter().all(|x| x.is_finite())
            && hw.stick.pitch.is_finite()
            && hw.stick.head_pos.iter().all(|x| x.is_finite())
            && hw.hand.grip.is_finite();
        if !finite {
            return Err(WorldError::NonFiniteState {
                hand: h,
                step: state.episode_step,
            });
        }
        let tips = fingertip_positions(hw, p);
        let fulcrum_station = fingers::stations(hw, p);
        let n = if hw.hand.stick_held {
            tips.iter()
                .zip(fulcrum_station.iter())
                .filter(|(t, s)| (**t - **s).norm() <= p.fingertip_contact_tol)
                .count()
        } else {
            0
        };
        events.fingertip_contacts.push(n);
    }
    state.episode_step += 1;
    Ok(events)
}

#[allow(clippy::too_many_arguments)]
fn physics_substep(
    hw: &mut HandWorld,
    hand_idx: usize,
    act: &HandAction,
    force: Vec3,
    dt: f64,
    cfg: &WorldConfig,
    contact_on: bool,
    friction: f64,
    sub: usize,
    events: &mut ContactEvents,
) {
    let p = &cfg.physics;
    // wrist: gravity-compensated point mass
    let accel = force / p.wrist_mass;
    hw.hand.wrist_vel += accel * dt;
    hw.hand.wrist_pos += hw.hand.wrist_vel * dt;

    for i in 0..5 {
        let v = (act.closure_targets[i] - hw.hand.closure[i]) / p.closure_tau;
        hw.hand.closure[i] = (hw.hand.closure[i] + v * dt).clamp(0.0, 1.0);
        hw.hand.closure_vel[i] = v;
    }

    if !hw.hand.stick_held {
        free_stick_substep(hw, dt, p);
        return;
    }

    let a = HandWorld::head_arm(p);
    let inertia = p.pitch_inertia();
    let m = p.stick_mass;
    let d = p.cm_offset();
    let th = hw.stick.pitch;
    let du = hw.axis_dpitch();
    let hold = hw.hold_strength(p);

    // gravity, grasp spring with gravity support, and wrist-acceleration coupling
    let mut torque = -m * GRAVITY * d * th.cos() * (1.0 - hold)
        + hold * p.grasp_stiffness * (hw.pitch_setpoint(p) - th)
        - m * d * accel.dot(&du);
    let mut damping = hold * p.grasp_damping;

    let mut touching: Option<(DrumId, Vec3, f64, f64)> = None;
    if contact_on {
        for (drum, pad) in cfg.layout.pads() {
            let depth = -pad.height_above(&hw.stick.head_pos);
            if depth > 0.0 && pad.radial_distance(&hw.stick.head_pos) <= pad.radius {
                touching = Some((drum, pad.normal, depth, 0.0));
                break;
            }
        }
    }

    let mut impulse = 0.0;
    let mut speed_in = 0.0;
    if let Some((_, normal, depth, _)) = touching.as_mut() {
        let jac = a * normal.dot(&du);
        let vn_wrist = normal.dot(&hw.hand.wrist_vel);
        speed_in = (-(vn_wrist + jac * hw.stick.pitch_vel)).max(0.0);
        let t_c = torque + (p.contact_stiffness * *depth - p.contact_damping * vn_wrist) * jac;
        let d_c = damping + p.contact_damping * jac * jac;
        let w = (hw.stick.pitch_vel + dt * t_c / inertia) / (1.0 + dt * d_c / inertia);
        let fn_ = p.contact_stiffness * *depth - p.contact_damping * (vn_wrist + jac * w);
        if fn_ > 0.0 {
            impulse = fn_ * dt;
            torque = t_c;
            damping = d_c;
        }
    }
    let w = (hw.stick.pitch_vel + dt * torque / inertia) / (1.0 + dt * damping / inertia);
    hw.stick.pitch_vel = w;
    hw.stick.pitch += dt * w;
    if hw.stick.pitch < PITCH_LIMITS.0 || hw.stick.pitch > PITCH_LIMITS.1 {
        hw.stick.pitch = hw.stick.pitch.clamp(PITCH_LIMITS.0, PITCH_LIMITS.1);
        hw.stick.pitch_vel = 0.0;
    }
    hw.update_held_stick(p);

    // contact bookkeeping: one record per contact episode per policy step
    let now = touching.filter(|_| impulse > 0.0).map(|t| t.0);
    if let Some(drum) = now {
        let onset = hw.contact != Some(drum);
        let idx = match hw.contact_record {
            Some(i) if !onset => i,
            _ => {
                events.drum_contacts.push(DrumContact {
                    hand: hand_idx,
                    drum,
                    normal_impulse: 0.0,
                    tip_speed_at_impact: if onset { speed_in } else { 0.0 },
                    onset,
                    substep: sub,
                });
                events.drum_contacts.len() - 1
            }
        };
        events.drum_contacts[idx].normal_impulse += impulse;
        hw.contact_record = Some(idx);
    } else {
        hw.contact_record = None;
    }
    hw.contact = now;

    // grip: impact-driven slip, squeeze-driven recovery
    let ti = 0.5 * (hw.hand.closure[0] + hw.hand.closure[1]);
    hw.hand.grip -= p.k_slip * impulse / friction;
    hw.hand.grip += p.k_rec * (ti - p.nominal_closure).max(0.0);
    hw.hand.grip = hw.hand.grip.clamp(0.0, 1.0);
    if hw.hand.grip < p.grip_drop_threshold {
        hw.hand.stick_held = false;
        hw.contact = None;
    }
}

fn free_stick_substep(hw: &mut HandWorld, dt: f64, p: &PhysicsConfig) {
    let s = &mut hw.stick;
    let mut v = (s.head_vel + s.tail_vel) * 0.5;
    let mut cm = (s.head_pos + s.tail_pos) * 0.5;
    let half = (s.head_pos - s.tail_pos) * 0.5;
    v.z -= GRAVITY * dt;
    v *= 1.0 / (1.0 + p.free_drag * dt);
    cm += v * dt;
    let low = (cm.z - half.z.abs()) - FLOOR_Z;
    if low < 0.0 {
        cm.z -= low;
        v = Vec3::zeros();
    }
    s.head_pos = cm + half;
    s.tail_pos = cm - half;
    s.head_vel = v;
    s.tail_vel = v;
    s.pitch_vel = 0.0;
}

impl WorldState {
    /// One text record of the world's scalars.
    pub fn trace_line(&self) -> String {
        let mut out = format!(
            "{}\t{}\t{}\t{:.6}\t{:.6}",
            self.episode_step,
            self.global_step,
            self.curriculum_contact_enabled as u8,
            self.physics.friction_scale,
            self.physics.gain_scale
        );
        for hw in &self.hands {
            let w = &hw.hand.wrist_pos;
            let hd = &hw.stick.head_pos;
            let _ = write!(
                out,
                "\t{:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {}",
                w.x, w.y, w.z, hd.x, hd.y, hd.z, hw.stick.pitch, hw.hand.grip, hw.hand.stick_held as u8
            );
        }
        out
    }
}

#[cfg(test)]
mod tests;
