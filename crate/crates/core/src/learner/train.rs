use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use super::policy::{compose_residual, sample_action, Policy};
use super::ppo::{ppo_update, Adam, PpoConfig, TrainBatch, UpdateStats};
use super::{compute_gae, LearnError, TrainerState};
use crate::env::{DrumEnv, EnvError, EnvOptions, Nominal, Task};
use crate::eval::{episode_metrics, EpisodeMetrics, EpisodeTrace};
use crate::world::HandAction;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("bad training config: {0}")]
    BadConfig(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// What the policy's output is added to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Bounded correction on top of the wrist plan.
    Residual,
    /// Full-range actions around a still wrist; no plan in the action.
    Scratch,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub n_envs: usize,
    /// Total environment steps summed over all environments.
    pub total_steps: u64,
    /// Steps per environment per iteration.
    pub horizon: usize,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    /// Fraction of each action bound the residual may use.
    pub residual_scale: f64,
    /// Separate wrist fraction; `residual_scale` when unset.
    pub arm_residual_scale: Option<f64>,
    pub residual_arm: bool,
    pub residual_hand: bool,
    pub kind: PolicyKind,
    pub seed: u64,
    /// Evaluate every this many iterations; 0 never.
    pub eval_every: usize,
    pub threads: usize,
    pub ppo: PpoConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.8,
            gae_lambda: 0.9,
            n_envs: 1024,
            total_steps: 40_000_000,
            horizon: 200,
            hidden: vec![512, 512, 512],
            init_log_std: 0.0,
            residual_scale: 0.1,
            arm_residual_scale: None,
            residual_arm: true,
            residual_hand: true,
            kind: PolicyKind::Residual,
            seed: 0,
            eval_every: 1,
            threads: 1,
            ppo: PpoConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::BadConfig(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.residual_scale > 0.0) || self.arm_residual_scale.is_some_and(|a| !(a > 0.0)) {
            return bad("residual scales must be positive");
        }
        if self.n_envs == 0 || self.horizon == 0 || self.hidden.is_empty() {
            return bad("n_envs, horizon and hidden sizes must be non-empty");
        }
        Ok(())
    }
}

/// How policy outputs become world actions.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionMap {
    pub nominal: Nominal,
    pub scale: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ActionMap {
    pub fn new(task: &Task, cfg: &TrainConfig) -> Self {
        let (lo, hi) = task.action_bounds();
        let clip = task.world.physics.action_clip;
        let (nominal, arm_frac, hand_frac) = match cfg.kind {
            PolicyKind::Residual => (
                Nominal::Plan,
                if cfg.residual_arm { cfg.arm_residual_scale.unwrap_or(cfg.residual_scale) } else { 0.0 },
                if cfg.residual_hand { cfg.residual_scale } else { 0.0 },
            ),
            PolicyKind::Scratch => (Nominal::Hold, 1.0, 1.0),
        };
        let mut scale = Vec::with_capacity(task.act_dim());
        for _ in 0..task.n_hand() {
            for i in 0..HandAction::DIM {
                scale.push(if i < 3 { arm_frac * clip } else { hand_frac });
            }
        }
        Self { nominal, scale, lo, hi }
    }

    /// Zero scale: the applied action is the nominal one.
    pub fn plan_only(task: &Task) -> Self {
        let (lo, hi) = task.action_bounds();
        Self {
            nominal: Nominal::Plan,
            scale: vec![0.0; task.act_dim()],
            lo,
            hi,
        }
    }

    pub fn apply(&self, nominal: &[f64], raw: &[f64]) -> Vec<f64> {
        compose_residual(nominal, raw, &self.scale, &self.lo, &self.hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RolloutMode {
    ClosedLoop,
    OpenLoopReplay(Vec<Vec<f64>>),
    PlanOnly,
    FixedGrasp,
    ArmDriven,
}

impl RolloutMode {
    pub fn name(&self) -> &'static str {
        match self {
            RolloutMode::ClosedLoop => "closed_loop",
            RolloutMode::OpenLoopReplay(_) => "open_loop_replay",
            RolloutMode::PlanOnly => "plan_only",
            RolloutMode::FixedGrasp => "fixed_grasp",
            RolloutMode::ArmDriven => "arm_driven",
        }
    }
}

/// One full episode. Policy-driven modes use the mean action unless
/// `sample_rng` is given. `global_step` sets the contact curriculum.
#[allow(clippy::too_many_arguments)]
pub fn rollout(
    policy: Option<&Policy<f32>>,
    task: &Arc<Task>,
    opts: &EnvOptions,
    map: &ActionMap,
    mode: &RolloutMode,
    seed: u64,
    global_step: u64,
    mut sample_rng: Option<&mut ChaCha8Rng>,
) -> Result<EpisodeTrace, TrainError> {
    let mut opts = opts.clone();
    opts.record_actions = true;
    let mut map = map.clone();
    match mode {
        RolloutMode::FixedGrasp => opts.freeze_closures = true,
        RolloutMode::PlanOnly => map = ActionMap::plan_only(task),
        RolloutMode::OpenLoopReplay(actions) if actions.len() < task.n_steps => {
            return Err(LearnError::RecordingLengthMismatch {
                needed: task.n_steps,
                got: actions.len(),
            }
            .into())
        }
        _ => {}
    }
    opts.nominal = map.nominal;
    let needs_policy = matches!(mode, RolloutMode::ClosedLoop | RolloutMode::FixedGrasp | RolloutMode::ArmDriven);
    if needs_policy && policy.is_none() {
        return Err(TrainError::BadConfig(format!("{} needs a policy", mode.name())));
    }
    let mut env = DrumEnv::new(task.clone(), opts, seed)?;
    env.set_global_step(global_step);
    let mut obs = vec![0.0; env.obs_dim()];
    while !env.is_done() {
        let applied = match mode {
            RolloutMode::OpenLoopReplay(actions) => actions[env.step].clone(),
            RolloutMode::PlanOnly => env.nominal_action(),
            _ => {
                let p = policy.unwrap();
                env.observe(&mut obs);
                let out = super::forward_policy(p, &obs)?;
                let raw = match sample_rng.as_deref_mut() {
                    Some(rng) => sample_action(&out.mean, &out.log_std, rng).0,
                    None => out.mean,
                };
                map.apply(&env.nominal_action(), &raw)
            }
        };
        env.step(&applied)?;
    }
    Ok(env.trace)
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationLog {
    pub iteration: u64,
    pub env_steps: u64,
    pub mean_return: f64,
    pub f1_eval: f64,
    pub hold_ratio: f64,
    pub stats: UpdateStats,
}

pub const LOG_HEADER: &str = "iteration,env_steps,mean_return,f1_eval,hold_ratio,loss_pi,loss_v,entropy";

impl IterationLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.iteration,
            self.env_steps,
            self.mean_return,
            self.f1_eval,
            self.hold_ratio,
            self.stats.loss_pi,
            self.stats.loss_v,
            self.stats.entropy
        )
    }
}

fn episode_seed(base: u64, env: usize, episode: u64) -> u64 {
    let mut z = base ^ (env as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ episode.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the held-out evaluation episodes.
pub fn eval_seed(base: u64, k: u64) -> u64 {
    episode_seed(base ^ 0xE7A1_5EED, usize::MAX, k)
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub task: Arc<Task>,
    pub opts: EnvOptions,
    pub map: ActionMap,
    pub policy: Policy<f32>,
    pub adam: Adam,
    pub iteration: u64,
    pub env_steps: u64,
    rng: ChaCha8Rng,
    envs: Vec<DrumEnv>,
    episodes: Vec<u64>,
}

impl Trainer {
    pub fn new(task: Arc<Task>, mut opts: EnvOptions, cfg: TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let map = ActionMap::new(&task, &cfg);
        opts.nominal = map.nominal;
        let mut envs = Vec::with_capacity(cfg.n_envs);
        for e in 0..cfg.n_envs {
            envs.push(DrumEnv::new(task.clone(), opts.clone(), episode_seed(cfg.seed, e, 0))?);
        }
        let obs_dim = envs[0].obs_dim();
        let policy = Policy::new(obs_dim, task.act_dim(), &cfg.hidden, cfg.init_log_std, &mut rng);
        let adam = Adam::new(&policy);
        Ok(Self {
            episodes: vec![0; cfg.n_envs],
            cfg,
            task,
            opts,
            map,
            policy,
            adam,
            iteration: 0,
            env_steps: 0,
            rng,
            envs,
        })
    }

    /// Continues from a saved policy and trainer state.
    pub fn resume(&mut self, policy: Policy<f32>, state: &TrainerState) -> Result<(), TrainError> {
        if policy.obs_dim() != self.policy.obs_dim() || policy.act_dim() != self.policy.act_dim() {
            return Err(LearnError::DimensionMismatch {
                expected: self.policy.obs_dim(),
                got: policy.obs_dim(),
            }
            .into());
        }
        self.policy = policy;
        self.adam = Adam::new(&self.policy);
        self.adam.restore(state);
        self.iteration = state.iteration;
        self.env_steps = state.env_steps;
        self.rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ state.iteration.wrapping_mul(0x2545_F491_4F6C_DD1D));
        for (e, env) in self.envs.iter_mut().enumerate() {
            self.episodes[e] = state.iteration;
            env.reset(episode_seed(self.cfg.seed, e, state.iteration))?;
        }
        Ok(())
    }

    pub fn trainer_state(&self) -> TrainerState {
        self.adam.snapshot(self.iteration, self.env_steps)
    }

    /// Per-environment steps so far; drives the contact curriculum.
    pub fn global_step(&self) -> u64 {
        self.env_steps / self.cfg.n_envs as u64
    }

    pub fn is_finished(&self) -> bool {
        self.env_steps >= self.cfg.total_steps
    }

    /// Collect, estimate advantages, update.
    pub fn iterate(&mut self) -> Result<IterationLog, TrainError> {
        let n = self.cfg.n_envs;
        let h = self.cfg.horizon;
        let od = self.envs[0].obs_dim();
        let ad = self.task.act_dim();
        let mut raw_obs = vec![0.0; n * od];
        let mut x = Vec::with_capacity(n * h * od);
        let mut actions = Vec::with_capacity(n * h * ad);
        let mut log_probs = Vec::with_capacity(n * h);
        let mut rewards = vec![0.0; n * h];
        let mut values = vec![0.0; n * h];
        let mut dones = vec![false; n * h];
        let mut reward_sum = 0.0;

        for t in 0..h {
            let g = self.global_step() + t as u64;
            for (e, env) in self.envs.iter_mut().enumerate() {
                env.set_global_step(g);
                env.observe(&mut raw_obs[e * od..(e + 1) * od]);
            }
            self.policy.norm.update(&raw_obs);
            let inputs = self.policy.prepare(&raw_obs);
            let (pi, v) = self.policy.forward_batch(&inputs, n);
            let log_std: Vec<f64> = self.policy.log_std.iter().map(|l| *l as f64).collect();
            let mut applied = Vec::with_capacity(n);
            for e in 0..n {
                let mean: Vec<f64> = pi.output()[e * ad..(e + 1) * ad].iter().map(|m| *m as f64).collect();
                let (a, lp) = sample_action(&mean, &log_std, &mut self.rng);
                applied.push(self.map.apply(&self.envs[e].nominal_action(), &a));
                x.extend(inputs[e * od..(e + 1) * od].iter().map(|v| *v as f64));
                actions.extend_from_slice(&a);
                log_probs.push(lp);
                values[t * n + e] = v.output()[e] as f64;
            }
            let outcomes = step_all(&mut self.envs, &applied, self.cfg.threads)?;
            for (e, out) in outcomes.into_iter().enumerate() {
                rewards[t * n + e] = out.reward.weighted_total;
                reward_sum += out.reward.weighted_total;
                dones[t * n + e] = out.done;
                if out.done {
                    self.episodes[e] += 1;
                    let seed = episode_seed(self.cfg.seed, e, self.episodes[e]);
                    self.envs[e].reset(seed)?;
                }
            }
        }
        self.env_steps += (n * h) as u64;

        // bootstrap values for the state after the last step
        for (e, env) in self.envs.iter_mut().enumerate() {
            env.observe(&mut raw_obs[e * od..(e + 1) * od]);
        }
        let inputs = self.policy.prepare(&raw_obs);
        let boot = self.policy.v.forward(&inputs, n);
        let mut advantages = vec![0.0; n * h];
        let mut returns = vec![0.0; n * h];
        for e in 0..n {
            let r: Vec<f64> = (0..h).map(|t| rewards[t * n + e]).collect();
            let v: Vec<f64> = (0..h).map(|t| values[t * n + e]).collect();
            let d: Vec<bool> = (0..h).map(|t| dones[t * n + e]).collect();
            let (a, ret) = compute_gae(&r, &v, &d, boot.output()[e] as f64, self.cfg.gamma, self.cfg.gae_lambda)?;
            for t in 0..h {
                advantages[t * n + e] = a[t];
                returns[t * n + e] = ret[t];
            }
        }
        let batch = TrainBatch {
            obs_dim: od,
            act_dim: ad,
            x,
            actions,
            log_probs,
            advantages,
            returns,
        };
        let stats = ppo_update(&mut self.policy, &mut self.adam, &batch, &self.cfg.ppo, &mut self.rng)?;
        self.iteration += 1;

        let (f1_eval, hold_ratio) = if self.cfg.eval_every > 0 && self.iteration % self.cfg.eval_every as u64 == 0 {
            let m = self.evaluate(1, RolloutMode::ClosedLoop)?;
            (m[0].f1.f1, m[0].hold_ratio)
        } else {
            (f64::NAN, f64::NAN)
        };
        Ok(IterationLog {
            iteration: self.iteration,
            env_steps: self.env_steps,
            mean_return: reward_sum / (n * h) as f64 * self.task.n_steps as f64,
            f1_eval,
            hold_ratio,
            stats,
        })
    }

    /// Deterministic held-out episodes at the current curriculum state.
    pub fn evaluate(&self, episodes: u64, mode: RolloutMode) -> Result<Vec<EpisodeMetrics>, TrainError> {
        (0..episodes)
            .map(|k| {
                let trace = rollout(
                    Some(&self.policy),
                    &self.task,
                    &self.opts,
                    &self.map,
                    &mode,
                    eval_seed(self.cfg.seed, k),
                    self.global_step(),
                    None,
                )?;
                episode_metrics(&trace, &self.task.schedule)
                    .map_err(|e| TrainError::BadConfig(e.to_string()))
            })
            .collect()
    }

    /// Runs until the step budget is spent, writing one CSV row per
    /// iteration (the header first when starting fresh).
    pub fn run<W: Write>(&mut self, log: &mut W) -> Result<Vec<IterationLog>, TrainError> {
        if self.iteration == 0 {
            writeln!(log, "{LOG_HEADER}")?;
        }
        let mut rows = Vec::new();
        while !self.is_finished() {
            let row = self.iterate()?;
            writeln!(log, "{}", row.csv_row())?;
            rows.push(row);
        }
        Ok(rows)
    }
}

fn step_all(envs: &mut [DrumEnv], applied: &[Vec<f64>], threads: usize) -> Result<Vec<crate::env::StepOutcome>, TrainError> {
    if threads <= 1 || envs.len() < 2 {
        return envs
            .iter_mut()
            .zip(applied)
            .map(|(env, a)| env.step(a).map_err(TrainError::from))
            .collect();
    }
    let chunk = envs.len().div_ceil(threads);
    let results: Vec<Result<Vec<crate::env::StepOutcome>, EnvError>> = std::thread::scope(|s| {
        let handles: Vec<_> = envs
            .chunks_mut(chunk)
            .zip(applied.chunks(chunk))
            .map(|(es, acts)| s.spawn(move || es.iter_mut().zip(acts).map(|(e, a)| e.step(a)).collect()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(envs.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Draws a standard-normal-free uniform seed stream for matrix runs.
pub fn derive_seed(base: u64, k: u64) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(base ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    r.random()
}
