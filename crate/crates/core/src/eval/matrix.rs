use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;

use super::{episode_metrics, EpisodeMetrics, MetricError};
use crate::env::{EnvOptions, Task};
use crate::learner::{eval_seed, read_checkpoint, rollout, ActionMap, Policy, RolloutMode, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("checkpoint {0} not found")]
    MissingCheckpoint(PathBuf),
    #[error("checkpoint {path}: {source}")]
    BadCheckpoint { path: PathBuf, source: io::Error },
    #[error("experiment {experiment}: {source}")]
    Rollout { experiment: String, source: TrainError },
    #[error("experiment {experiment}: {source}")]
    Metric { experiment: String, source: MetricError },
}

#[derive(Debug, Clone)]
pub enum PolicySource {
    /// No network; only valid for plan-only cells.
    Baseline,
    Checkpoint(PathBuf),
    Loaded(Arc<Policy<f32>>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellMode {
    Run(RolloutMode),
    /// Record a closed-loop episode in the nominal (unrandomized) world,
    /// then replay its actions under each seed's randomization.
    ReplayRecorded,
}

impl CellMode {
    pub fn name(&self) -> &'static str {
        match self {
            CellMode::Run(m) => m.name(),
            CellMode::ReplayRecorded => "open_loop_replay",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub name: String,
    /// Summary heading this cell is listed under.
    pub group: String,
    pub task: Arc<Task>,
    pub opts: EnvOptions,
    /// Determines how policy outputs map to actions.
    pub train: TrainConfig,
    pub policy: PolicySource,
    pub mode: CellMode,
    pub seeds: Vec<u64>,
    /// Curriculum step the evaluation world sees.
    pub global_step: u64,
}

impl Experiment {
    /// A cell evaluated past the contact curriculum on held-out seeds.
    pub fn new(
        name: &str,
        group: &str,
        task: Arc<Task>,
        train: TrainConfig,
        policy: PolicySource,
        mode: CellMode,
        n_seeds: u64,
    ) -> Self {
        let global_step = task.world.physics.curriculum_steps;
        let seeds = (0..n_seeds).map(|k| eval_seed(train.seed, k)).collect();
        Self {
            name: name.to_string(),
            group: group.to_string(),
            task,
            opts: EnvOptions::default(),
            train,
            policy,
            mode,
            seeds,
            global_step,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MatrixRow {
    pub experiment: String,
    pub group: String,
    pub seed: u64,
    pub metrics: EpisodeMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population statistics; NaN for an empty slice.
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub experiment: String,
    pub group: String,
    pub n: usize,
    pub f1: MeanStd,
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub hold_ratio: MeanStd,
    pub trajectory_error: MeanStd,
    pub energy: MeanStd,
}

#[derive(Debug, Clone, Default)]
pub struct MatrixReport {
    pub rows: Vec<MatrixRow>,
}

pub const REPORT_HEADER: &str = "experiment,seed,f1,precision,recall,hold_ratio,traj_error_m,energy";

impl MatrixReport {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "{REPORT_HEADER}")?;
        for r in &self.rows {
            let m = &r.metrics;
            writeln!(
                w,
                "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                r.experiment, r.seed, m.f1.f1, m.f1.precision, m.f1.recall, m.hold_ratio, m.trajectory_error, m.energy
            )?;
        }
        Ok(())
    }

    /// Per-experiment aggregates in first-seen order.
    pub fn summaries(&self) -> Vec<CellSummary> {
        let mut names: Vec<(&str, &str)> = Vec::new();
        for r in &self.rows {
            if !names.iter().any(|(n, _)| *n == r.experiment) {
                names.push((&r.experiment, &r.group));
            }
        }
        names
            .into_iter()
            .map(|(name, group)| {
                let rows: Vec<&EpisodeMetrics> =
                    self.rows.iter().filter(|r| r.experiment == name).map(|r| &r.metrics).collect();
                let col = |f: fn(&EpisodeMetrics) -> f64| MeanStd::of(&rows.iter().map(|m| f(m)).collect::<Vec<_>>());
                CellSummary {
                    experiment: name.to_string(),
                    group: group.to_string(),
                    n: rows.len(),
                    f1: col(|m| m.f1.f1),
                    precision: col(|m| m.f1.precision),
                    recall: col(|m| m.f1.recall),
                    hold_ratio: col(|m| m.hold_ratio),
                    trajectory_error: col(|m| m.trajectory_error),
                    energy: col(|m| m.energy),
                }
            })
            .collect()
    }

    pub fn summary(&self, name: &str) -> Option<CellSummary> {
        self.summaries().into_iter().find(|s| s.experiment == name)
    }

    /// Text table, one block per group.
    pub fn summary_text(&self) -> String {
        let sums = self.summaries();
        let mut groups: Vec<&str> = Vec::new();
        for s in &sums {
            if !groups.contains(&s.group.as_str()) {
                groups.push(&s.group);
            }
        }
        let mut out = String::new();
        for g in groups {
            let _ = writeln!(out, "== {g}");
            let _ = writeln!(
                out,
                "{:<28} {:>3} {:>13} {:>13} {:>17} {:>17}",
                "experiment", "n", "f1", "hold", "traj_err_m", "energy"
            );
            for s in sums.iter().filter(|s| s.group == g) {
                let _ = writeln!(
                    out,
                    "{:<28} {:>3} {:>6.3}±{:<6.3} {:>6.3}±{:<6.3} {:>8.4}±{:<8.4} {:>8.1}±{:<8.1}",
                    s.experiment,
                    s.n,
                    s.f1.mean,
                    s.f1.std,
                    s.hold_ratio.mean,
                    s.hold_ratio.std,
                    s.trajectory_error.mean,
                    s.trajectory_error.std,
                    s.energy.mean,
                    s.energy.std
                );
            }
        }
        out
    }
}

fn load_policy(src: &PolicySource) -> Result<Option<Arc<Policy<f32>>>, MatrixError> {
    match src {
        PolicySource::Baseline => Ok(None),
        PolicySource::Loaded(p) => Ok(Some(p.clone())),
        PolicySource::Checkpoint(path) => {
            let f = File::open(path).map_err(|e| match e.kind() {
                io::ErrorKind::NotFound => MatrixError::MissingCheckpoint(path.clone()),
                _ => MatrixError::BadCheckpoint {
                    path: path.clone(),
                    source: e,
                },
            })?;
            let (p, _) = read_checkpoint(&mut BufReader::new(f)).map_err(|e| MatrixError::BadCheckpoint {
                path: path.clone(),
                source: e,
            })?;
            Ok(Some(Arc::new(p)))
        }
    }
}

fn run_cell(ex: &Experiment) -> Result<Vec<MatrixRow>, MatrixError> {
    let wrap = |source: TrainError| MatrixError::Rollout {
        experiment: ex.name.clone(),
        source,
    };
    let policy = load_policy(&ex.policy)?;
    let map = ActionMap::new(&ex.task, &ex.train);
    let mode = match &ex.mode {
        CellMode::Run(m) => m.clone(),
        CellMode::ReplayRecorded => {
            let mut nominal = (*ex.task).clone();
            nominal.world.physics.randomize = false;
            let trace = rollout(
                policy.as_deref(),
                &Arc::new(nominal),
                &ex.opts,
                &map,
                &RolloutMode::ClosedLoop,
                ex.train.seed,
                ex.global_step,
                None,
            )
            .map_err(wrap)?;
            RolloutMode::OpenLoopReplay(trace.actions)
        }
    };
    ex.seeds
        .iter()
        .map(|&seed| {
            let trace = rollout(policy.as_deref(), &ex.task, &ex.opts, &map, &mode, seed, ex.global_step, None)
                .map_err(wrap)?;
            let metrics = episode_metrics(&trace, &ex.task.schedule).map_err(|source| MatrixError::Metric {
                experiment: ex.name.clone(),
                source,
            })?;
            Ok(MatrixRow {
                experiment: ex.name.clone(),
                group: ex.group.clone(),
                seed,
                metrics,
            })
        })
        .collect()
}

/// Runs every cell; with `threads > 1` cells run concurrently. Row order
/// follows the experiment list either way.
pub fn run_matrix(experiments: &[Experiment], threads: usize) -> Result<MatrixReport, MatrixError> {
    let results: Vec<Result<Vec<MatrixRow>, MatrixError>> = if threads <= 1 {
        experiments.iter().map(run_cell).collect()
    } else {
        let chunk = experiments.len().div_ceil(threads).max(1);
        std::thread::scope(|s| {
            let handles: Vec<_> = experiments
                .chunks(chunk)
                .map(|c| s.spawn(move || c.iter().map(run_cell).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("matrix worker panicked"))
                .collect()
        })
    };
    let mut report = MatrixReport::default();
    for r in results {
        report.rows.extend(r?);
    }
    Ok(report)
}
