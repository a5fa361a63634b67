//! Run configuration: one TOML file drives every subcommand.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::choreography::PrimitiveParams;
use crate::env::{EnvError, EnvOptions, Task};
use crate::eval::{CellMode, Experiment, PolicySource};
use crate::learner::{PolicyKind, RolloutMode, TrainConfig};
use crate::obs::ObsConfig;
use crate::reward::RewardConfig;
use crate::scenario::{genre_score, letter_score, loop_hits, ScenarioKind};
use crate::score::{generate_exercise, parse_smf_with_layout, retime, DrumId, DrumScore, KitLayout, ScoreError};
use crate::world::PhysicsConfig;

/// Environment variable consulted when no `--config` is given.
pub const CONFIG_ENV: &str = "DEXDRUM_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}: referenced file does not exist")]
    MissingFile(PathBuf),
    #[error("invalid setting: {0}")]
    Invalid(String),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub midi: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreSettings {
    pub bpm: f64,
    pub n_hits: usize,
    /// Letter sequence for the two-drum scenario (`c` snare, `d` hi-hat).
    pub pattern: String,
    pub slowdown: f64,
    /// Built-in groove used by the bimanual scenario when no MIDI file is set.
    pub genre: String,
    pub bars: usize,
    /// Fixed episode length; derived from the score when unset.
    pub n_steps: Option<usize>,
}

impl Default for ScoreSettings {
    fn default() -> Self {
        Self {
            bpm: 60.0,
            n_hits: 10,
            pattern: "ccdd".into(),
            slowdown: 1.0,
            genre: "rock".into(),
            bars: 2,
            n_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub group: String,
    /// closed_loop, open_loop_replay, plan_only, fixed_grasp or arm_driven.
    pub mode: String,
    pub checkpoint: Option<PathBuf>,
    pub seeds: u64,
    pub scenario: Option<ScenarioKind>,
    pub bpm: Option<f64>,
    pub pattern: Option<String>,
    pub n_hits: Option<usize>,
    pub n_steps: Option<usize>,
    pub kind: Option<PolicyKind>,
    pub arm_residual_scale: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: String::new(),
            group: "default".into(),
            mode: "closed_loop".into(),
            checkpoint: None,
            seeds: 5,
            scenario: None,
            bpm: None,
            pattern: None,
            n_hits: None,
            n_steps: None,
            kind: None,
            arm_residual_scale: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: usize,
    pub scenario: ScenarioKind,
    pub paths: Paths,
    pub score: ScoreSettings,
    pub physics: PhysicsConfig,
    pub plan: PrimitiveParams,
    pub reward: RewardConfig,
    pub obs: ObsConfig,
    pub train: TrainConfig,
    pub experiment: Vec<ExperimentConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 1,
            scenario: ScenarioKind::Exercise,
            paths: Paths::default(),
            score: ScoreSettings::default(),
            physics: PhysicsConfig::default(),
            plan: PrimitiveParams::default(),
            reward: RewardConfig::default(),
            obs: ObsConfig::default(),
            train: TrainConfig::default(),
            experiment: Vec::new(),
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl RunConfig {
    /// Parses TOML text; `path` is only used in messages and to resolve
    /// relative file references.
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            msg: e.message().to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(m) = cfg.paths.midi.as_mut() {
            resolve(m);
        }
        for ex in &mut cfg.experiment {
            if let Some(c) = ex.checkpoint.as_mut() {
                resolve(c);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(m) = &self.paths.midi {
            if !m.exists() {
                return Err(ConfigError::MissingFile(m.clone()));
            }
        }
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for ex in &self.experiment {
            if ex.name.is_empty() {
                return Err(ConfigError::Invalid("experiment without a name".into()));
            }
            parse_mode(&ex.mode)?;
        }
        Ok(())
    }

    /// The training config with the top-level seed and thread count applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            threads: self.threads,
            ..self.train.clone()
        }
    }

    pub fn env_options(&self) -> EnvOptions {
        EnvOptions {
            obs: self.obs,
            reward: self.reward,
            ..EnvOptions::default()
        }
    }

    /// Score for the configured scenario before kit mapping to hands.
    pub fn build_score(&self, scenario: ScenarioKind, s: &ScoreSettings) -> Result<DrumScore, ConfigError> {
        let score = match (scenario, &self.paths.midi) {
            (ScenarioKind::BimanualSong | ScenarioKind::TwoDrum, Some(midi)) => {
                let bytes = std::fs::read(midi).map_err(|source| ConfigError::Io {
                    path: midi.clone(),
                    source,
                })?;
                let layout = if scenario == ScenarioKind::TwoDrum {
                    KitLayout::TwoDrum
                } else {
                    KitLayout::FullKit
                };
                parse_smf_with_layout(&bytes, layout)?
            }
            (ScenarioKind::BimanualSong, None) => genre_score(&s.genre, s.bpm, s.bars)
                .ok_or_else(|| ConfigError::Invalid(format!("unknown genre {:?}", s.genre)))?,
            (ScenarioKind::TwoDrum, None) => letter_score(&s.pattern, s.bpm)?,
            (ScenarioKind::Exercise, _) => {
                generate_exercise(s.bpm, s.n_hits, DrumId::Snare, crate::score::DEFAULT_LEAD_IN_S)?
            }
            (ScenarioKind::EasyLoop, _) => {
                let n_steps = s.n_steps.unwrap_or(400);
                let n_hits = loop_hits(n_steps, s.bpm, self.physics.control_rate_hz);
                generate_exercise(s.bpm, n_hits, DrumId::Snare, crate::score::DEFAULT_LEAD_IN_S)?
            }
        };
        let score = if scenario == ScenarioKind::BimanualSong {
            score.without(DrumId::Kick)
        } else {
            score
        };
        Ok(retime(&score, s.slowdown)?)
    }

    fn task_from(&self, scenario: ScenarioKind, s: &ScoreSettings, physics: &PhysicsConfig) -> Result<Arc<Task>, ConfigError> {
        let score = self.build_score(scenario, s)?;
        let mut spec = scenario.spec(physics);
        spec.plan.params = self.plan;
        spec.n_steps = match scenario {
            ScenarioKind::EasyLoop => Some(s.n_steps.unwrap_or(400)),
            _ => s.n_steps,
        };
        let name = match scenario {
            ScenarioKind::Exercise => format!("exercise_{}", s.bpm),
            ScenarioKind::EasyLoop => "easy_loop".into(),
            ScenarioKind::TwoDrum if self.paths.midi.is_none() => s.pattern.clone(),
            _ => "song".into(),
        };
        Ok(Arc::new(Task::build(&name, score, &spec)?))
    }

    pub fn task(&self) -> Result<Arc<Task>, ConfigError> {
        self.task_from(self.scenario, &self.score, &self.physics)
    }

    /// Evaluation cells for the configured experiment list.
    pub fn experiments(&self) -> Result<Vec<Experiment>, ConfigError> {
        self.experiment.iter().map(|ex| self.experiment_cell(ex)).collect()
    }

    fn experiment_cell(&self, ex: &ExperimentConfig) -> Result<Experiment, ConfigError> {
        let mode = parse_mode(&ex.mode)?;
        let mut s = self.score.clone();
        if let Some(b) = ex.bpm {
            s.bpm = b;
        }
        if let Some(p) = &ex.pattern {
            s.pattern.clone_from(p);
        }
        if let Some(n) = ex.n_hits {
            s.n_hits = n;
        }
        if ex.n_steps.is_some() {
            s.n_steps = ex.n_steps;
        }
        let mut physics = self.physics.clone();
        let mut opts = self.env_options();
        if mode == CellMode::Run(RolloutMode::ArmDriven) {
            physics.curriculum_active = false;
            opts.reward.weights.arm = 0.0;
        }
        let task = self.task_from(ex.scenario.unwrap_or(self.scenario), &s, &physics)?;
        let mut train = self.train_config();
        if let Some(k) = ex.kind {
            train.kind = k;
        }
        if ex.arm_residual_scale.is_some() {
            train.arm_residual_scale = ex.arm_residual_scale;
        }
        let policy = match &ex.checkpoint {
            Some(p) => PolicySource::Checkpoint(p.clone()),
            None => PolicySource::Baseline,
        };
        let mut cell = Experiment::new(&ex.name, &ex.group, task, train, policy, mode, ex.seeds);
        cell.opts = opts;
        Ok(cell)
    }
}

pub fn parse_mode(name: &str) -> Result<CellMode, ConfigError> {
    Ok(match name {
        "closed_loop" => CellMode::Run(RolloutMode::ClosedLoop),
        "open_loop_replay" => CellMode::ReplayRecorded,
        "plan_only" => CellMode::Run(RolloutMode::PlanOnly),
        "fixed_grasp" => CellMode::Run(RolloutMode::FixedGrasp),
        "arm_driven" => CellMode::Run(RolloutMode::ArmDriven),
        other => return Err(ConfigError::Invalid(format!("unknown rollout mode {other:?}"))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::parse(text, Path::new("run.toml"))
    }

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn overrides_reach_modules() {
        let cfg = parse(
            "seed = 7\nscenario = \"two_drum\"\n[score]\npattern = \"cdcd\"\n[physics]\nkp = 900.0\n\
             [reward.weights]\narm = 0.0\n[train]\nn_envs = 4\nhidden = [8]\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.physics.kp, 900.0);
        assert_eq!(cfg.reward.weights.arm, 0.0);
        assert_eq!(cfg.train_config().seed, 7);
        let task = cfg.task().unwrap();
        assert_eq!(task.name, "cdcd");
        assert_eq!(task.schedule.total_hits(), 4);
    }

    #[test]
    fn unknown_key_reports_line() {
        match parse("seed = 1\n\n[physics]\nkp = 1.0\nbogus = 2\n") {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_midi_rejected() {
        let r = parse("[paths]\nmidi = \"does/not/exist.mid\"\n");
        assert!(matches!(r, Err(ConfigError::MissingFile(_))));
    }

    #[test]
    fn bad_mode_rejected() {
        let r = parse("[[experiment]]\nname = \"x\"\nmode = \"wobble\"\n");
        assert!(matches!(r, Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn arm_driven_cell_drops_penalty_and_curriculum() {
        let cfg = parse("[[experiment]]\nname = \"arm\"\nmode = \"arm_driven\"\nbpm = 120.0\n").unwrap();
        let cells = cfg.experiments().unwrap();
        assert_eq!(cells[0].opts.reward.weights.arm, 0.0);
        assert!(!cells[0].task.world.physics.curriculum_active);
        assert_eq!(cells[0].task.name, "exercise_120");
    }
}
