//! Episode wrapper tying a score's plan to the world, observations and
//! rewards.

use std::sync::Arc;

use thiserror::Error;

use crate::choreography::{
    assign_hands, build_reference, stick_to_wrist, AssignmentRule, DrumLayout, NominalPlan, PlanConfig, PlanError,
    ReferenceTrajectory,
};
use crate::eval::{EpisodeTrace, HandRecord, PlayedHit};
use crate::obs::{build_observation, ObsConfig, ObsLayout};
use crate::reward::{onset_step, step_reward, HitTracker, RewardBreakdown, RewardConfig};
use crate::score::{schedule, DrumScore, ScheduledScore, ScoreError};
use crate::world::{
    apply_observation_noise, reset, set_contact_curriculum, step, Action, HandAction, HandInit, PhysicsConfig,
    WorldConfig, WorldError, WorldState,
};

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    World(#[from] WorldError),
}

/// A score turned into everything an episode needs: schedule, stick
/// reference, nominal wrist plan and world configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub name: String,
    pub score: DrumScore,
    pub schedule: ScheduledScore,
    pub reference: ReferenceTrajectory,
    pub plan: NominalPlan,
    pub world: WorldConfig,
    pub n_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub layout: DrumLayout,
    pub rule: AssignmentRule,
    pub plan: PlanConfig,
    pub physics: PhysicsConfig,
    pub window_halfwidth_steps: usize,
    /// Steps kept after the last scheduled hit's window.
    pub tail_steps: usize,
    /// Fixed episode length; derived from the score when `None`.
    pub n_steps: Option<usize>,
}

impl TaskSpec {
    pub fn unimanual(layout: DrumLayout, physics: PhysicsConfig) -> Self {
        Self {
            layout,
            rule: AssignmentRule::StaticBySide,
            plan: PlanConfig::unimanual(),
            physics,
            window_halfwidth_steps: 2,
            tail_steps: 10,
            n_steps: None,
        }
    }

    pub fn bimanual(layout: DrumLayout, physics: PhysicsConfig) -> Self {
        Self {
            plan: PlanConfig::bimanual(),
            ..Self::unimanual(layout, physics)
        }
    }
}

impl Task {
    pub fn build(name: &str, score: DrumScore, spec: &TaskSpec) -> Result<Self, EnvError> {
        let p = &spec.physics;
        let mut plan_cfg = spec.plan.clone();
        plan_cfg.stick_length = p.stick_length;
        plan_cfg.grasp_fraction = p.grasp_fraction;
        plan_cfg.nominal_closure = p.nominal_closure;
        let n_hand = plan_cfg.hands.len();
        let map = assign_hands(&score, &spec.layout, &spec.rule, n_hand)?;
        let sched = schedule(&score, p.control_rate_hz, &map, spec.window_halfwidth_steps)?;
        let w = (plan_cfg.params.strike_halfwidth_s * p.control_rate_hz).round() as usize;
        let n_steps = spec.n_steps.unwrap_or_else(|| {
            let by_duration = (score.duration_s * p.control_rate_hz).ceil() as usize;
            let by_hits = sched.last_step().map_or(0, |s| s + w);
            by_duration.max(by_hits) + spec.tail_steps
        });
        let reference = build_reference(&sched, &spec.layout, &plan_cfg, n_steps + 1)?;
        let plan = stick_to_wrist(&reference, p.grasp_fraction, p.nominal_closure);
        let hands = (0..n_hand)
            .map(|h| HandInit {
                wrist: plan.hands[h].wrist[0],
                yaw: plan_cfg.hands[h].yaw,
                pitch: plan.hands[h].pitch[0],
            })
            .collect();
        Ok(Self {
            name: name.to_string(),
            score,
            schedule: sched,
            reference,
            plan,
            world: WorldConfig {
                physics: p.clone(),
                layout: spec.layout.clone(),
                hands,
            },
            n_steps,
        })
    }

    pub fn n_hand(&self) -> usize {
        self.world.hands.len()
    }

    pub fn act_dim(&self) -> usize {
        self.n_hand() * HandAction::DIM
    }

    /// Per-component action bounds.
    pub fn action_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let c = self.world.physics.action_clip;
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for _ in 0..self.n_hand() {
            lo.extend([-c, -c, -c, 0.0, 0.0, 0.0, 0.0, 0.0]);
            hi.extend([c, c, c, 1.0, 1.0, 1.0, 1.0, 1.0]);
        }
        (lo, hi)
    }
}

/// Where the action a residual is added to comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nominal {
    /// Track the wrist plan.
    Plan,
    /// Hold the wrist still at the nominal grasp.
    Hold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvOptions {
    pub obs: ObsConfig,
    pub reward: RewardConfig,
    pub nominal: Nominal,
    /// Keep finger targets at the initial grasp whatever the action says.
    pub freeze_closures: bool,
    pub record_actions: bool,
}

impl Default for EnvOptions {
    fn default() -> Self {
        Self {
            obs: ObsConfig::default(),
            reward: RewardConfig::default(),
            nominal: Nominal::Plan,
            freeze_closures: false,
            record_actions: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DrumEnv {
    pub task: Arc<Task>,
    pub opts: EnvOptions,
    pub state: WorldState,
    pub tracker: HitTracker,
    pub step: usize,
    pub layout: ObsLayout,
    pub trace: EpisodeTrace,
    global_step: u64,
    frozen: Option<Vec<[f64; 5]>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: RewardBreakdown,
    pub done: bool,
}

impl DrumEnv {
    pub fn new(task: Arc<Task>, opts: EnvOptions, seed: u64) -> Result<Self, EnvError> {
        let state = reset(&task.world, seed)?;
        let layout = ObsLayout::reduced(task.n_hand(), opts.obs.lookahead);
        let tracker = HitTracker::new(task.schedule.clone());
        let mut env = Self {
            task,
            opts,
            state,
            tracker,
            step: 0,
            layout,
            trace: EpisodeTrace::default(),
            global_step: 0,
            frozen: None,
        };
        env.apply_curriculum();
        Ok(env)
    }

    pub fn reset(&mut self, seed: u64) -> Result<(), EnvError> {
        self.state = reset(&self.task.world, seed)?;
        self.tracker = HitTracker::new(self.task.schedule.clone());
        self.step = 0;
        self.trace = EpisodeTrace::default();
        self.frozen = None;
        self.apply_curriculum();
        Ok(())
    }

    pub fn obs_dim(&self) -> usize {
        self.layout.len()
    }

    /// Training progress used by the contact curriculum.
    pub fn set_global_step(&mut self, global_step: u64) {
        self.global_step = global_step;
        self.apply_curriculum();
    }

    fn apply_curriculum(&mut self) {
        let p = &self.task.world.physics;
        if p.curriculum_active {
            set_contact_curriculum(&mut self.state, self.global_step, p.curriculum_steps);
        } else {
            set_contact_curriculum(&mut self.state, self.global_step, 0);
        }
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.task.n_steps
    }

    /// Observation at the current step, with sensor noise when enabled.
    pub fn observe(&mut self, out: &mut [f64]) {
        build_observation(
            &self.state,
            &self.task.reference,
            &self.tracker,
            self.step,
            &self.layout,
            &self.opts.obs,
            out,
        );
        let noisy = self.layout.noisy_ranges();
        apply_observation_noise(out, &noisy, &self.task.world.physics, &mut self.state.rng);
    }

    /// Flat nominal action for the current step.
    pub fn nominal_action(&self) -> Vec<f64> {
        let p = &self.task.world.physics;
        let mut out = Vec::with_capacity(self.task.act_dim());
        for (h, hw) in self.state.hands.iter().enumerate() {
            let a = match self.opts.nominal {
                Nominal::Plan => {
                    let plan = &self.task.plan.hands[h];
                    let i = (self.step + 1).min(plan.wrist.len() - 1);
                    HandAction {
                        wrist_delta: plan.wrist[i] - hw.hand.wrist_pos,
                        closure_targets: plan.closure[i],
                    }
                }
                Nominal::Hold => HandAction {
                    wrist_delta: crate::choreography::Vec3::zeros(),
                    closure_targets: [p.nominal_closure; 5],
                },
            }
            .clipped(p.action_clip);
            let mut v = [0.0; HandAction::DIM];
            a.to_slice(&mut v);
            out.extend_from_slice(&v);
        }
        out
    }

    /// Applies a flat action and advances one control step.
    pub fn step(&mut self, applied: &[f64]) -> Result<StepOutcome, EnvError> {
        let mut action = Action::from_vec(applied);
        if self.frozen.is_none() && self.opts.freeze_closures {
            if self.state.hands.iter().all(|h| h.hand.stick_held) {
                self.frozen = Some(self.state.hands.iter().map(|h| h.hand.closure).collect());
            }
        }
        if let Some(frozen) = &self.frozen {
            for (a, c) in action.hands.iter_mut().zip(frozen) {
                a.closure_targets = *c;
            }
        }
        if self.opts.record_actions {
            self.trace.actions.push(action.to_vec());
        }
        let events = step(&mut self.state, &action, &self.task.world)?;
        let before = self.step;
        let reward = step_reward(
            &self.state,
            &events,
            &self.task.reference,
            &mut self.tracker,
            before,
            &self.task.world,
            &self.opts.reward,
        );
        self.step += 1;

        let p = &self.task.world.physics;
        let n_sub = p.controller_substeps * p.physics_substeps;
        for c in &events.drum_contacts {
            if c.onset && c.tip_speed_at_impact >= p.hit_speed_threshold {
                self.trace.hits.push(PlayedHit {
                    hand: c.hand,
                    drum: c.drum,
                    step: onset_step(before, c.substep, n_sub),
                });
            }
        }
        self.trace.drum_contacts += events.drum_contacts.len();
        let records = self
            .state
            .hands
            .iter()
            .enumerate()
            .map(|(h, hw)| {
                let (rh, rt) = self.task.reference.at(h, self.step);
                HandRecord {
                    held: hw.hand.stick_held,
                    head: hw.stick.head_pos,
                    tail: hw.stick.tail_pos,
                    ref_head: rh,
                    ref_tail: rt,
                    arm_force: hw.arm_force,
                    wrist_vel: hw.hand.wrist_vel,
                }
            })
            .collect();
        self.trace.steps.push(records);
        self.trace.rewards.push(reward.weighted_total);
        Ok(StepOutcome {
            reward,
            done: self.is_done(),
        })
    }
}
