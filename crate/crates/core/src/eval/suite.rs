//! Desk-scale experiment suite: trains the policies each comparison needs
//! and returns the evaluation cells.

use std::sync::Arc;

use super::{run_matrix, CellMode, Experiment, MatrixError, MatrixReport, PolicySource};
use crate::env::{EnvError, EnvOptions, Task};
use crate::learner::{IterationLog, Policy, PolicyKind, RolloutMode, TrainConfig, TrainError, Trainer};
use crate::scenario::{easy_loop_task, exercise_task, sequence_task};
use crate::world::PhysicsConfig;

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    /// Plan plus residual against plan only and learning from scratch.
    Ladder,
    /// Reactive against frozen fingers on the 400-step easy loop.
    Grasp,
    /// Finger- against arm-driven control and the curriculum ablation.
    Tempo,
    /// Closed loop against open-loop replay on letter sequences.
    Loop,
}

impl Comparison {
    pub const ALL: [Comparison; 4] = [Comparison::Ladder, Comparison::Grasp, Comparison::Tempo, Comparison::Loop];

    pub fn name(self) -> &'static str {
        match self {
            Comparison::Ladder => "ladder",
            Comparison::Grasp => "grasp",
            Comparison::Tempo => "tempo",
            Comparison::Loop => "loop",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub seed: u64,
    pub hidden: Vec<usize>,
    /// Environments and step budget for the ladder task.
    pub main_envs: usize,
    pub main_steps: u64,
    /// Environments and step budget for every other policy.
    pub side_envs: usize,
    pub side_steps: u64,
    pub horizon: usize,
    pub eval_seeds: u64,
    pub exercise_hits: usize,
    pub tempos: Vec<f64>,
    pub curriculum_tempos: Vec<f64>,
    /// Wrist residual fraction for the finger-control tasks.
    pub tempo_arm_scale: f64,
    pub sequence_bpm: f64,
    pub threads: usize,
    pub physics: PhysicsConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            hidden: vec![64, 64],
            main_envs: 64,
            main_steps: 1_200_000,
            side_envs: 32,
            side_steps: 600_000,
            horizon: 64,
            eval_seeds: 5,
            exercise_hits: 10,
            tempos: vec![60.0, 120.0, 180.0, 240.0],
            curriculum_tempos: vec![120.0, 180.0],
            tempo_arm_scale: 1.0,
            sequence_bpm: 60.0,
            threads: 1,
            physics: PhysicsConfig::default(),
        }
    }
}

impl SuiteConfig {
    fn train_config(&self, main: bool, salt: u64) -> TrainConfig {
        TrainConfig {
            n_envs: if main { self.main_envs } else { self.side_envs },
            total_steps: if main { self.main_steps } else { self.side_steps },
            horizon: self.horizon,
            hidden: self.hidden.clone(),
            eval_every: 0,
            seed: self.seed.wrapping_add(salt),
            threads: self.threads,
            ..TrainConfig::default()
        }
    }
}

/// One trained policy and its log.
#[derive(Debug, Clone)]
pub struct Trained {
    pub name: String,
    pub policy: Arc<Policy<f32>>,
    pub log: Vec<IterationLog>,
}

pub fn train(name: &str, task: Arc<Task>, opts: EnvOptions, cfg: TrainConfig) -> Result<Trained, SuiteError> {
    let mut tr = Trainer::new(task, opts, cfg)?;
    let mut log = Vec::new();
    while !tr.is_finished() {
        log.push(tr.iterate()?);
    }
    Ok(Trained {
        name: name.to_string(),
        policy: Arc::new(tr.policy),
        log,
    })
}

#[derive(Debug, Clone, Default)]
pub struct SuiteRun {
    pub trained: Vec<Trained>,
    pub experiments: Vec<Experiment>,
}

fn cell(name: &str, group: &str, task: &Arc<Task>, train: &TrainConfig, policy: PolicySource, mode: CellMode, n: u64) -> Experiment {
    Experiment::new(name, group, task.clone(), train.clone(), policy, mode, n)
}

fn closed() -> CellMode {
    CellMode::Run(RolloutMode::ClosedLoop)
}

/// Trains what `which` needs and builds its cells. `progress` hears about
/// each policy as it finishes.
pub fn build_suite(cfg: &SuiteConfig, which: Comparison, progress: &mut dyn FnMut(&Trained)) -> Result<SuiteRun, SuiteError> {
    let mut run = SuiteRun::default();
    let n = cfg.eval_seeds;
    let opts = EnvOptions::default();
    let p = &cfg.physics;
    let mut keep = |t: Trained, run: &mut SuiteRun| {
        progress(&t);
        let policy = PolicySource::Loaded(t.policy.clone());
        run.trained.push(t);
        policy
    };
    match which {
        Comparison::Ladder => {
            let g = "residual ladder";
            let task = exercise_task(60.0, cfg.exercise_hits, p)?;
            let res_cfg = cfg.train_config(true, 1);
            let scratch_cfg = TrainConfig {
                kind: PolicyKind::Scratch,
                ..res_cfg.clone()
            };
            let res = keep(train("residual", task.clone(), opts.clone(), res_cfg.clone())?, &mut run);
            let scr = keep(train("scratch", task.clone(), opts.clone(), scratch_cfg.clone())?, &mut run);
            run.experiments.extend([
                cell("residual", g, &task, &res_cfg, res, closed(), n),
                cell("plan_only", g, &task, &res_cfg, PolicySource::Baseline, CellMode::Run(RolloutMode::PlanOnly), n),
                cell("scratch", g, &task, &scratch_cfg, scr, closed(), n),
            ]);
        }
        Comparison::Grasp => {
            let g = "reactive vs fixed grasp";
            let task = easy_loop_task(400, p)?;
            let reactive_cfg = cfg.train_config(false, 2);
            // frozen fingers leave the strike to the wrist
            let fixed_cfg = TrainConfig {
                residual_scale: 1.0,
                ..reactive_cfg.clone()
            };
            let fixed_opts = EnvOptions {
                freeze_closures: true,
                ..opts.clone()
            };
            let r = keep(train("reactive_grasp", task.clone(), opts.clone(), reactive_cfg.clone())?, &mut run);
            let f = keep(train("fixed_grasp", task.clone(), fixed_opts, fixed_cfg.clone())?, &mut run);
            run.experiments.extend([
                cell("reactive_grasp", g, &task, &reactive_cfg, r, closed(), n),
                cell("fixed_grasp", g, &task, &fixed_cfg, f, CellMode::Run(RolloutMode::FixedGrasp), n),
            ]);
        }
        Comparison::Tempo => {
            let g = "finger vs arm control";
            let tcfg = TrainConfig {
                arm_residual_scale: Some(cfg.tempo_arm_scale),
                ..cfg.train_config(false, 3)
            };
            let no_curr = PhysicsConfig {
                curriculum_active: false,
                ..p.clone()
            };
            let mut arm_opts = opts.clone();
            arm_opts.reward.weights.arm = 0.0;
            for &bpm in &cfg.tempos {
                let task = exercise_task(bpm, cfg.exercise_hits, p)?;
                let plain = exercise_task(bpm, cfg.exercise_hits, &no_curr)?;
                let f = keep(train(&format!("finger_{bpm}"), task.clone(), opts.clone(), tcfg.clone())?, &mut run);
                run.experiments.push(cell(&format!("finger_{bpm}"), g, &task, &tcfg, f, closed(), n));
                if cfg.curriculum_tempos.contains(&bpm) {
                    let name = format!("no_curriculum_{bpm}");
                    let nc = keep(train(&name, plain.clone(), opts.clone(), tcfg.clone())?, &mut run);
                    run.experiments.push(cell(&name, g, &plain, &tcfg, nc, closed(), n));
                }
                let name = format!("arm_{bpm}");
                let a = keep(train(&name, plain.clone(), arm_opts.clone(), tcfg.clone())?, &mut run);
                let mut c = cell(&name, g, &plain, &tcfg, a, CellMode::Run(RolloutMode::ArmDriven), n);
                c.opts = arm_opts.clone();
                run.experiments.push(c);
            }
        }
        Comparison::Loop => {
            let g = "closed vs open loop";
            let lcfg = cfg.train_config(false, 4);
            let task = sequence_task("ccdd", cfg.sequence_bpm, p)?;
            let pol = keep(train("ccdd", task, opts.clone(), lcfg.clone())?, &mut run);
            for pat in ["ccdd", "ccccdddd", "ccddccdd"] {
                let t = sequence_task(pat, cfg.sequence_bpm, p)?;
                run.experiments.push(cell(&format!("closed_{pat}"), g, &t, &lcfg, pol.clone(), closed(), n));
                run.experiments.push(cell(&format!("open_{pat}"), g, &t, &lcfg, pol.clone(), CellMode::ReplayRecorded, n));
            }
        }
    }
    Ok(run)
}

/// Trains and evaluates the chosen comparisons.
pub fn run_suite(
    cfg: &SuiteConfig,
    which: &[Comparison],
    progress: &mut dyn FnMut(&Trained),
) -> Result<(MatrixReport, Vec<Trained>), SuiteError> {
    let mut experiments = Vec::new();
    let mut trained = Vec::new();
    for &c in which {
        let run = build_suite(cfg, c, progress)?;
        experiments.extend(run.experiments);
        trained.extend(run.trained);
    }
    Ok((run_matrix(&experiments, cfg.threads)?, trained))
}
