//! End-to-end tests of the installed binary: artifact contracts,
//! determinism, exit codes, and error wording.

use std::path::PathBuf;
use std::process::{Command, Output};

fn setrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_setrl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// Fresh scratch directory for one test.
fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("setrl-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

/// Overrides that make a training run take well under a second.
const TINY: &[&str] = &[
    "--set",
    "ppo.rollout_steps=64",
    "--set",
    "ppo.minibatch=64",
    "--set",
    "ppo.update_epochs=2",
    "--set",
    "ppo.iters=3",
];

/// Drops the wall-clock column, the only legitimately nondeterministic
/// field in a metrics file.
fn strip_wall(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').expect("13 columns").0)
        .collect::<Vec<_>>()
        .join("\n")
}

fn train_into(dir: &PathBuf, extra: &[&str]) -> Output {
    let out_arg = dir.display().to_string();
    let mut args = vec!["train", "--out", &out_arg];
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    setrl(&args)
}

#[test]
fn train_writes_artifacts_and_reruns_identically() {
    let a = scratch("train-a");
    let b = scratch("train-b");
    let c = scratch("train-c");

    let out = train_into(&a, &["--seed", "7"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    for f in ["metrics.csv", "ckpt_final.txt", "config.txt"] {
        assert!(a.join(f).exists(), "missing {f}");
    }

    let out = train_into(&b, &["--seed", "7"]);
    assert_eq!(code(&out), 0);
    let ma = std::fs::read_to_string(a.join("metrics.csv")).unwrap();
    let mb = std::fs::read_to_string(b.join("metrics.csv")).unwrap();
    assert_eq!(strip_wall(&ma), strip_wall(&mb), "same seed must replay exactly");
    assert_ne!(ma, mb, "wall column alone should differ");
    let ca = std::fs::read_to_string(a.join("ckpt_final.txt")).unwrap();
    let cb = std::fs::read_to_string(b.join("ckpt_final.txt")).unwrap();
    assert_eq!(ca, cb, "same seed must produce identical parameters");

    let out = train_into(&c, &["--seed", "8"]);
    assert_eq!(code(&out), 0);
    let mc = std::fs::read_to_string(c.join("metrics.csv")).unwrap();
    assert_ne!(strip_wall(&ma), strip_wall(&mc), "different seed must differ");

    // Retraining over an existing directory starts the metrics file over
    // instead of appending a second run's rows.
    let out = train_into(&a, &["--seed", "7"]);
    assert_eq!(code(&out), 0);
    let ma2 = std::fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert_eq!(strip_wall(&ma), strip_wall(&ma2));
}

#[test]
fn train_rejects_bad_config_with_named_key() {
    let dir = scratch("train-bad");
    let out = train_into(&dir, &["--set", "env.num_fod=3"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("env.num_fod"), "stderr: {}", stderr(&out));
    assert!(!dir.join("metrics.csv").exists(), "no artifacts on config error");

    let out = train_into(&dir, &["--set", "ppo.lr=fast"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("ppo.lr"));

    let out = train_into(&dir, &["--set", "env.name=convoy", "--set", "env.num_food=2"]);
    assert_eq!(code(&out), 2, "scavenger-only key must not apply to convoy");
    assert!(stderr(&out).contains("env.num_food"));
}

#[test]
fn ordered_encoder_trains_on_convoy_slots() {
    let dir = scratch("convoy-ordered");
    let out = train_into(
        &dir,
        &["--set", "env.name=convoy", "--set", "encoder.type=ordered", "--set", "ppo.iters=1"],
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(dir.join("ckpt_final.txt").exists());
}

#[test]
fn eval_replays_and_rejects_mismatched_checkpoint() {
    let dir = scratch("eval");
    let out = train_into(&dir, &["--seed", "3"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let run = dir.display().to_string();
    let once = setrl(&["eval", "--run", &run, "--episodes", "1", "--seed", "3"]);
    assert_eq!(code(&once), 0, "stderr: {}", stderr(&once));
    let twice = setrl(&["eval", "--run", &run, "--episodes", "1", "--seed", "3"]);
    assert_eq!(stdout(&once), stdout(&twice), "same arguments, same report");

    // An untrained policy still lands inside the reward bounds: per-step
    // penalty −0.05 over at most 100 steps, +1 on a find.
    let text = stdout(&once);
    let mean: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("mean_return"))
        .expect("mean_return line")
        .trim()
        .parse()
        .unwrap();
    assert!((-5.0..=1.0).contains(&mean), "mean {mean} outside reward bounds");

    let other_seed = setrl(&["eval", "--run", &run, "--episodes", "1", "--seed", "4"]);
    assert_ne!(stdout(&once), stdout(&other_seed), "different episodes expected");

    let mismatch = setrl(&["eval", "--run", &run, "--set", "encoder.k=32", "--episodes", "1"]);
    assert_eq!(code(&mismatch), 2);
    let err = stderr(&mismatch);
    assert!(err.contains("enc."), "mismatch must name the offending block: {err}");

    let missing = setrl(&["eval", "--episodes", "1"]);
    assert_eq!(code(&missing), 2, "no checkpoint given");
}

#[test]
fn sweep_covers_grid_resumes_and_summarizes() {
    let dir = scratch("sweep");
    let out_arg = dir.display().to_string();
    let mut args = vec![
        "sweep",
        "--out",
        &out_arg,
        "--num-food",
        "1,2",
        "--encoders",
        "attention,ordered",
        "--seeds",
        "0",
        "--window",
        "2",
        "--threshold",
        "0.5",
    ];
    args.extend_from_slice(TINY);

    let first = setrl(&args);
    assert_eq!(code(&first), 0, "stderr: {}", stderr(&first));
    let cells = ["f1-attention-s0", "f1-ordered-s0", "f2-attention-s0", "f2-ordered-s0"];
    for cell in cells {
        assert!(dir.join(cell).join("ckpt_final.txt").exists(), "missing {cell}");
        assert!(dir.join(cell).join("metrics.csv").exists());
    }
    let summary = std::fs::read_to_string(dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + cells.len(), "one row per cell");
    assert!(dir.join("summary.txt").exists());
    // Three tiny iterations cannot clear a 0.5 return threshold.
    let text = std::fs::read_to_string(dir.join("summary.txt")).unwrap();
    assert!(text.contains("BELOW"));

    let second = setrl(&args);
    assert_eq!(code(&second), 0);
    let log = stdout(&second);
    assert_eq!(log.matches("skipping").count(), 4, "all cells resume: {log}");
    assert!(!log.contains("training "), "no cell should retrain: {log}");
}

#[test]
fn sweep_records_cell_failures_and_continues() {
    let dir = scratch("sweep-fail");
    let out_arg = dir.display().to_string();
    let mut args = vec![
        "sweep",
        "--out",
        &out_arg,
        "--num-food",
        "1",
        "--encoders",
        "attention,bogus",
        "--seeds",
        "0",
        "--threshold",
        "0.0",
    ];
    args.extend_from_slice(TINY);
    let out = setrl(&args);
    assert_eq!(code(&out), 1, "a failed cell makes the sweep fail");
    assert!(stderr(&out).contains("f1-bogus-s0"), "stderr: {}", stderr(&out));
    assert!(
        dir.join("f1-attention-s0").join("ckpt_final.txt").exists(),
        "healthy cells still run"
    );
    assert!(dir.join("summary.txt").exists(), "summary still written");
}

#[test]
fn verify_passes_and_fault_injection_isolates_one_property() {
    let fast = &["verify", "--trials", "40", "--grad-instances", "2"];
    let ok = setrl(fast);
    assert_eq!(code(&ok), 0, "stderr: {}", stderr(&ok));
    let lines: Vec<String> = stdout(&ok).lines().map(String::from).collect();
    assert_eq!(lines.len(), 4);
    assert!(lines.iter().all(|l| l.starts_with("PASS")), "{lines:?}");

    let mut faulty = fast.to_vec();
    faulty.extend_from_slice(&["--inject", "skip-softmax"]);
    let bad = setrl(&faulty);
    assert_eq!(code(&bad), 1);
    let lines: Vec<String> = stdout(&bad).lines().map(String::from).collect();
    assert!(lines[0].starts_with("PASS"), "invariance survives the fault");
    assert!(lines[1].starts_with("FAIL"), "decomposition catches it");
    assert!(lines[2].starts_with("PASS"));
    assert!(lines[3].starts_with("PASS"));

    let zero = setrl(&["verify", "--trials", "40", "--grad-instances", "2", "--tolerance", "0"]);
    assert_eq!(code(&zero), 1, "exact float equality is unattainable");
    assert!(stdout(&zero).lines().next().unwrap().starts_with("FAIL"));
}

#[test]
fn space_report_prints_exact_counts() {
    let out = setrl(&["space-report", "--n", "5", "--m", "2"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("ordered mappings        20"), "{text}");
    assert!(text.contains("invariant mappings      10"), "{text}");
    assert!(text.contains("reduction factor (m!)   2"), "{text}");

    let csv = setrl(&["space-report", "--n", "5", "--m", "2", "--csv"]);
    assert!(stdout(&csv).contains("5,2,20,10,2"));

    // Far past the u64 ceiling for n!, still exact.
    let big = setrl(&["space-report", "--n", "30", "--m", "10", "--csv"]);
    assert_eq!(code(&big), 0);
    assert!(stdout(&big).contains("30,10,109027350432000,30045015,3628800"));

    let bad = setrl(&["space-report", "--n", "2", "--m", "5"]);
    assert_eq!(code(&bad), 2);
    assert!(stderr(&bad).contains("m=5"), "{}", stderr(&bad));
}
