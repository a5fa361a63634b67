use std::fs;
use std::path::Path;

use dexdrum::cli::dispatch;
use dexdrum::eval::EpisodeTrace;
use dexdrum::score::smf::score_to_smf;
use dexdrum::score::{generate_exercise, parse_smf, DrumId};

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = dispatch(args.iter().copied(), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn tiny_config(dir: &Path) -> String {
    let path = dir.join("run.toml");
    fs::write(
        &path,
        "seed = 3\n\n[score]\nn_hits = 3\n\n[train]\nn_envs = 4\ntotal_steps = 512\nhorizon = 32\nhidden = [8]\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn no_arguments_is_a_usage_error() {
    let (code, _, err) = run(&[]);
    assert_eq!(code, 1);
    assert!(err.contains("Usage"));
}

#[test]
fn help_succeeds() {
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, 0);
    for cmd in ["score", "plan", "train", "rollout", "eval", "selftest"] {
        assert!(out.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn unknown_config_key_reports_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "seed = 1\n\n[train]\nn_envs = 2\nwarp = 9\n").unwrap();
    let (code, _, err) = run(&["--config", path.to_str().unwrap(), "plan"]);
    assert_eq!(code, 1);
    assert!(err.contains("bad.toml:5"), "{err}");
}

#[test]
fn missing_config_file_is_a_usage_error() {
    let (code, _, _) = run(&["--config", "/definitely/not/here.toml", "plan"]);
    assert_eq!(code, 1);
}

#[test]
fn score_round_trips_a_midi_file() {
    let dir = tempfile::tempdir().unwrap();
    let score = generate_exercise(120.0, 4, DrumId::Snare, 0.5).unwrap();
    let midi = dir.path().join("ex.mid");
    fs::write(&midi, score_to_smf(&score, 480)).unwrap();
    let expected = parse_smf(&fs::read(&midi).unwrap()).unwrap();

    let (code, out, _) = run(&["score", "--midi", midi.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(out, expected.to_text());

    let (code, slow, _) = run(&["score", "--midi", midi.to_str().unwrap(), "--slowdown", "2"]);
    assert_eq!(code, 0);
    let first: f64 = slow.lines().next().unwrap().split('\t').next().unwrap().parse().unwrap();
    assert!((first - 1.0).abs() < 1e-6, "{slow}");
}

#[test]
fn score_rejects_bad_layout_and_missing_file() {
    let (code, _, _) = run(&["score", "--midi", "x.mid", "--layout", "orchestra"]);
    assert_eq!(code, 1);
    let (code, _, _) = run(&["score", "--midi", "/no/such/file.mid"]);
    assert_eq!(code, 2);
}

#[test]
fn train_then_rollout_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let train_dir = dir.path().join("train");
    let td = train_dir.to_str().unwrap();

    let (code, _, err) = run(&["--config", &cfg, "--out", td, "train"]);
    assert_eq!(code, 0, "{err}");
    let log = fs::read_to_string(train_dir.join("train_log.csv")).unwrap();
    assert!(log.starts_with("iteration,env_steps,"));
    assert_eq!(log.lines().count(), 1 + 512 / (4 * 32));

    let (code, _, err) = run(&["--config", &cfg, "--out", td, "train", "--resume", &format!("{td}/policy.ckpt"), "--steps", "1024"]);
    assert_eq!(code, 0, "{err}");
    let log = fs::read_to_string(train_dir.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 1024 / (4 * 32));
    let last = log.lines().last().unwrap();
    assert!(last.starts_with("8,1024,"), "{last}");

    let ckpt = format!("{td}/policy.ckpt");
    let ro = dir.path().join("ro");
    let (code, out, err) = run(&["--config", &cfg, "--out", ro.to_str().unwrap(), "rollout", "--checkpoint", &ckpt, "--episode-seed", "5"]);
    assert_eq!(code, 0, "{err}");
    let text = fs::read_to_string(ro.join("trace.txt")).unwrap();
    let trace = EpisodeTrace::load(&text).unwrap();
    assert!(!trace.actions.is_empty());
    assert_eq!(trace.actions.len(), trace.steps.len());

    let rp = dir.path().join("rp");
    let trace_path = ro.join("trace.txt");
    let (code, replay_out, err) = run(&[
        "--config",
        &cfg,
        "--out",
        rp.to_str().unwrap(),
        "rollout",
        "--mode",
        "open_loop_replay",
        "--replay",
        trace_path.to_str().unwrap(),
        "--episode-seed",
        "5",
    ]);
    assert_eq!(code, 0, "{err}");
    // same world, same actions
    assert_eq!(replay_out, out);
    assert_eq!(EpisodeTrace::load(&fs::read_to_string(rp.join("trace.txt")).unwrap()).unwrap().actions, trace.actions);
}

#[test]
fn rollout_argument_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    assert_eq!(run(&["--config", &cfg, "rollout", "--mode", "sideways"]).0, 1);
    assert_eq!(run(&["--config", &cfg, "rollout"]).0, 1);
    assert_eq!(run(&["--config", &cfg, "rollout", "--checkpoint", "/no/policy.ckpt"]).0, 2);
    let (code, out, _) = run(&["--config", &cfg, "rollout", "--mode", "plan_only"]);
    assert_eq!(code, 0);
    assert!(out.starts_with("f1,precision,recall"));
}

#[test]
fn eval_runs_configured_experiments() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eval.toml");
    fs::write(
        &path,
        "[score]\nn_hits = 3\n\n[[experiment]]\nname = \"plan\"\nmode = \"plan_only\"\nseeds = 2\n",
    )
    .unwrap();
    let out_dir = dir.path().join("eval");
    let (code, out, err) = run(&["--config", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "eval"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("plan"));
    let csv = fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(out_dir.join("summary.txt").exists());
}

#[test]
fn eval_without_experiments_or_suite_is_a_usage_error() {
    assert_eq!(run(&["eval"]).0, 1);
    assert_eq!(run(&["eval", "--suite", "cooking"]).0, 1);
}

#[test]
fn plan_writes_reference() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("plan");
    let (code, _, err) = run(&["--config", &cfg, "--out", out.to_str().unwrap(), "plan"]);
    assert_eq!(code, 0, "{err}");
    assert!(!fs::read_to_string(out.join("reference.txt")).unwrap().is_empty());
}

#[test]
fn shipped_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/exercise.toml");
    let cfg = dexdrum::config::RunConfig::load(&path).unwrap();
    assert_eq!(cfg.train.n_envs, 64);
    assert_eq!(cfg.experiments().unwrap().len(), 2);
}
