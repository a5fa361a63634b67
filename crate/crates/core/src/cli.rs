//! Command-line front end. Exit codes: 0 success, 1 usage or config error,
//! 2 runtime failure.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_mode, ConfigError, RunConfig, CONFIG_ENV};
use crate::eval::suite::{run_suite, Comparison, SuiteConfig};
use crate::eval::{episode_metrics, run_matrix, CellMode, EpisodeTrace, MatrixReport};
use crate::learner::{
    read_checkpoint, rollout, write_checkpoint, ActionMap, RolloutMode, Trainer, LOG_HEADER,
};
use crate::score::{parse_smf_with_layout, retime, KitLayout};

#[derive(Debug, Parser)]
#[command(name = "dexdrum", version, about = "Robot drumming: scores, plans, training and evaluation")]
struct Cli {
    /// TOML run configuration (falls back to $DEXDRUM_CONFIG).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Concurrent worlds; 1 gives reproducible output.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a MIDI file, fold it onto a kit, retime it and list the events.
    Score(ScoreArgs),
    /// Write the reference stick trajectory for the configured scenario.
    Plan,
    /// Train a residual policy.
    Train(TrainArgs),
    /// Run one episode and write its trace and metrics.
    Rollout(RolloutArgs),
    /// Evaluate the configured experiments or the built-in suite.
    Eval(EvalArgs),
    /// Formula and oracle checks.
    Selftest,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    midi: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    slowdown: f64,
    /// full_kit or two_drum
    #[arg(long, default_value = "full_kit")]
    layout: String,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Total environment steps.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    envs: Option<usize>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Write a checkpoint every this many iterations (0: only at the end).
    #[arg(long, default_value_t = 0)]
    checkpoint_every: u64,
}

#[derive(Debug, Args)]
struct RolloutArgs {
    /// closed_loop, open_loop_replay, plan_only, fixed_grasp or arm_driven
    #[arg(long, default_value = "closed_loop")]
    mode: String,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Trace whose actions open_loop_replay should replay; without it the
    /// policy is first run in the unrandomized world.
    #[arg(long)]
    replay: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    episode_seed: u64,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Comma-separated built-in comparisons (ladder, grasp, tempo, loop or
    /// all) to train and evaluate instead of the configured experiments.
    #[arg(long)]
    suite: Option<String>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Runs the CLI on `args` (without the program name).
pub fn dispatch<I, S>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv = std::iter::once(std::ffi::OsString::from("dexdrum")).chain(args.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    1
                }
            };
        }
    };
    match run(cli, stdout) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(stderr, "error: {m}");
            1
        }
        Err(Failure::Runtime(m)) => {
            let _ = writeln!(stderr, "error: {m}");
            2
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let path = cli
        .config
        .clone()
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let mut cfg = match path {
        Some(p) => RunConfig::load(&p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t.max(1);
    }
    if let Some(o) = &cli.out {
        cfg.paths.out_dir = Some(o.clone());
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> Result<Option<PathBuf>, Failure> {
    match &cfg.paths.out_dir {
        Some(d) => {
            fs::create_dir_all(d).map_err(|e| runtime(format!("{}: {e}", d.display())))?;
            Ok(Some(d.clone()))
        }
        None => Ok(None),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), Failure> {
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Score(a) => cmd_score(&cfg, a, stdout),
        Command::Plan => cmd_plan(&cfg, stdout),
        Command::Train(a) => cmd_train(&cfg, a, stdout),
        Command::Rollout(a) => cmd_rollout(&cfg, a, stdout),
        Command::Eval(a) => cmd_eval(&cfg, a, stdout),
        Command::Selftest => cmd_selftest(stdout),
    }
}

fn cmd_score(cfg: &RunConfig, a: &ScoreArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let midi = a
        .midi
        .clone()
        .or_else(|| cfg.paths.midi.clone())
        .ok_or_else(|| Failure::Usage("score needs --midi or paths.midi".into()))?;
    let layout = KitLayout::from_name(&a.layout)
        .ok_or_else(|| Failure::Usage(format!("unknown layout {:?} (full_kit or two_drum)", a.layout)))?;
    if !(a.slowdown > 0.0) {
        return Err(Failure::Usage(format!("slowdown must be positive, got {}", a.slowdown)));
    }
    let bytes = fs::read(&midi).map_err(|e| runtime(format!("{}: {e}", midi.display())))?;
    let score = parse_smf_with_layout(&bytes, layout).map_err(runtime)?;
    let score = retime(&score, a.slowdown).map_err(runtime)?;
    let text = score.to_text();
    write!(stdout, "{text}").map_err(runtime)?;
    if let Some(d) = out_dir(cfg)? {
        write_file(&d.join("score.txt"), &text)?;
    }
    Ok(())
}

fn cmd_plan(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), Failure> {
    let task = cfg.task()?;
    let text = task.reference.dump();
    match out_dir(cfg)? {
        Some(d) => {
            write_file(&d.join("reference.txt"), &text)?;
            writeln!(stdout, "{} steps, {} hands -> {}", task.n_steps, task.n_hand(), d.join("reference.txt").display())
                .map_err(runtime)?;
        }
        None => write!(stdout, "{text}").map_err(runtime)?,
    }
    Ok(())
}

fn save_checkpoint(path: &Path, trainer: &Trainer) -> Result<(), Failure> {
    let f = File::create(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(f);
    write_checkpoint(&mut w, &trainer.policy, Some(&trainer.trainer_state())).map_err(runtime)?;
    w.flush().map_err(runtime)
}

fn cmd_train(cfg: &RunConfig, a: &TrainArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let task = cfg.task()?;
    let mut tcfg = cfg.train_config();
    if let Some(s) = a.steps {
        tcfg.total_steps = s;
    }
    if let Some(n) = a.envs {
        tcfg.n_envs = n;
    }
    let dir = cfg
        .paths
        .out_dir
        .clone()
        .or_else(|| cfg.paths.checkpoint_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs"));
    fs::create_dir_all(&dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    let mut trainer = Trainer::new(task, cfg.env_options(), tcfg).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(path) = &a.resume {
        let f = File::open(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        let (policy, state) = read_checkpoint(&mut BufReader::new(f)).map_err(runtime)?;
        let state = state.ok_or_else(|| runtime("checkpoint has no trainer state to resume from"))?;
        trainer.resume(policy, &state).map_err(runtime)?;
    }
    let log_path = dir.join("train_log.csv");
    let mut log = fs::OpenOptions::new()
        .create(true)
        .append(trainer.iteration > 0)
        .write(true)
        .truncate(trainer.iteration == 0)
        .open(&log_path)
        .map_err(|e| runtime(format!("{}: {e}", log_path.display())))?;
    if trainer.iteration == 0 {
        writeln!(log, "{LOG_HEADER}").map_err(runtime)?;
    }
    let ckpt = dir.join("policy.ckpt");
    while !trainer.is_finished() {
        let row = trainer.iterate().map_err(runtime)?;
        writeln!(log, "{}", row.csv_row()).map_err(runtime)?;
        writeln!(stdout, "{}", row.csv_row()).map_err(runtime)?;
        if a.checkpoint_every > 0 && row.iteration % a.checkpoint_every == 0 {
            save_checkpoint(&ckpt, &trainer)?;
        }
    }
    save_checkpoint(&ckpt, &trainer)?;
    writeln!(stdout, "checkpoint {}", ckpt.display()).map_err(runtime)?;
    Ok(())
}

fn cmd_rollout(cfg: &RunConfig, a: &RolloutArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let cell_mode = parse_mode(&a.mode)?;
    let mut physics = cfg.physics.clone();
    let mut opts = cfg.env_options();
    if cell_mode == CellMode::Run(RolloutMode::ArmDriven) {
        physics.curriculum_active = false;
        opts.reward.weights.arm = 0.0;
    }
    let cfg = RunConfig {
        physics,
        ..cfg.clone()
    };
    let task = cfg.task()?;
    let tcfg = cfg.train_config();
    let map = ActionMap::new(&task, &tcfg);
    let needs_policy = !matches!(cell_mode, CellMode::Run(RolloutMode::PlanOnly)) && a.replay.is_none();
    let policy = if needs_policy {
        let path = a
            .checkpoint
            .clone()
            .or_else(|| cfg.paths.checkpoint_dir.as_ref().map(|d| d.join("policy.ckpt")))
            .ok_or_else(|| Failure::Usage(format!("mode {} needs --checkpoint", a.mode)))?;
        let f = File::open(&path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        Some(read_checkpoint(&mut BufReader::new(f)).map_err(runtime)?.0)
    } else {
        None
    };
    let global = task.world.physics.curriculum_steps;
    let mode = match cell_mode {
        CellMode::Run(m) => m,
        CellMode::ReplayRecorded => {
            let actions = match &a.replay {
                Some(p) => {
                    let text = fs::read_to_string(p).map_err(|e| runtime(format!("{}: {e}", p.display())))?;
                    EpisodeTrace::load(&text).map_err(runtime)?.actions
                }
                None => {
                    let mut nominal = (*task).clone();
                    nominal.world.physics.randomize = false;
                    let t = rollout(policy.as_ref(), &Arc::new(nominal), &opts, &map, &RolloutMode::ClosedLoop, cfg.seed, global, None)
                        .map_err(runtime)?;
                    t.actions
                }
            };
            RolloutMode::OpenLoopReplay(actions)
        }
    };
    let trace = rollout(policy.as_ref(), &task, &opts, &map, &mode, a.episode_seed, global, None).map_err(runtime)?;
    let m = episode_metrics(&trace, &task.schedule).map_err(runtime)?;
    let header = "f1,precision,recall,hold_ratio,traj_error_m,energy";
    let row = format!(
        "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
        m.f1.f1, m.f1.precision, m.f1.recall, m.hold_ratio, m.trajectory_error, m.energy
    );
    writeln!(stdout, "{header}\n{row}").map_err(runtime)?;
    if let Some(d) = out_dir(&cfg)? {
        write_file(&d.join("trace.txt"), &trace.dump())?;
        write_file(&d.join("metrics.csv"), &format!("{header}\n{row}\n"))?;
    }
    Ok(())
}

fn write_report(cfg: &RunConfig, report: &MatrixReport, stdout: &mut dyn Write) -> Result<(), Failure> {
    let summary = report.summary_text();
    write!(stdout, "{summary}").map_err(runtime)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv).map_err(runtime)?;
    match out_dir(cfg)? {
        Some(d) => {
            fs::write(d.join("report.csv"), &csv).map_err(runtime)?;
            write_file(&d.join("summary.txt"), &summary)?;
        }
        None => stdout.write_all(&csv).map_err(runtime)?,
    }
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, a: &EvalArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    let report = match &a.suite {
        Some(list) => {
            let which: Vec<Comparison> = if list == "all" {
                Comparison::ALL.to_vec()
            } else {
                list.split(',')
                    .map(|s| Comparison::from_name(s.trim()).ok_or_else(|| Failure::Usage(format!("unknown comparison {s:?}"))))
                    .collect::<Result<_, _>>()?
            };
            let scfg = SuiteConfig {
                seed: cfg.seed,
                threads: cfg.threads,
                physics: cfg.physics.clone(),
                ..SuiteConfig::default()
            };
            let mut progress = |t: &crate::eval::suite::Trained| {
                let last = t.log.last().map(|r| r.csv_row()).unwrap_or_default();
                let _ = writeln!(std::io::stderr(), "trained {}: {last}", t.name);
            };
            run_suite(&scfg, &which, &mut progress).map_err(runtime)?.0
        }
        None => {
            let cells = cfg.experiments()?;
            if cells.is_empty() {
                return Err(Failure::Usage("no [[experiment]] entries in the config and no --suite given".into()));
            }
            run_matrix(&cells, cfg.threads).map_err(runtime)?
        }
    };
    write_report(cfg, &report, stdout)
}

fn cmd_selftest(stdout: &mut dyn Write) -> Result<(), Failure> {
    let checks = crate::selftest::run_all();
    for c in &checks {
        writeln!(stdout, "{}", c.line()).map_err(runtime)?;
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Runtime(format!("{failed} check(s) failed")));
    }
    Ok(())
}
