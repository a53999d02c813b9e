//! The command-line contract: flags, precedence, exit codes and file schemas.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_pair-grpo");

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    for (k, _) in std::env::vars() {
        if k.starts_with("PAIR_GRPO_") {
            cmd.env_remove(k);
        }
    }
    cmd.envs(envs.iter().copied());
    cmd.output().unwrap()
}

fn out_arg(dir: &Path) -> &str {
    dir.to_str().unwrap()
}

#[test]
fn negative_beta_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "hp.beta = -0.5\n").unwrap();
    let o = run(&["verify", "--config", cfg.to_str().unwrap(), "--out", out_arg(&dir.path().join("o"))], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hp.beta"));
}

#[test]
fn missing_config_and_unknown_key() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["train", "--config", "/nonexistent/x.cfg", "--out", out_arg(dir.path())], &[]);
    assert_eq!(o.status.code(), Some(2));
    let cfg = dir.path().join("c.cfg");
    fs::write(&cfg, "hp.bogus = 1\n").unwrap();
    let o = run(&["train", "--config", cfg.to_str().unwrap(), "--out", out_arg(dir.path())], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hp.bogus"));
}

#[test]
fn suite_filter_runs_only_that_suite() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--suite", "equivalence", "--out", out_arg(dir.path())], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).count(), 1);
    let csv = fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.starts_with("equivalence,")));
    let o = run(&["verify", "--suite", "nope", "--out", out_arg(dir.path())], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn noiseless_soft_pair_train_rows_and_monotone_j() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["train", "--method", "soft_pair", "--epochs", "30", "--out", out_arg(dir.path())],
        &[("PAIR_GRPO_ENV_NOISE_STD", "0")],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("epochs.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epoch,loss_total,loss_fit_or_surrogate,kl_term,grad_norm,policy_kl,delta_t,J,wall_ms"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 30);
    let js: Vec<f64> = rows.iter().map(|r| r[7].parse().unwrap()).collect();
    assert!(js.windows(2).all(|w| w[1] >= w[0]));
    assert!(rows.iter().all(|r| r[6].is_empty() && r[8].is_empty()));
    let manifest = fs::read_to_string(dir.path().join("manifest.cfg")).unwrap();
    assert!(manifest.contains("env.noise_std = 0\n"));
    assert!(manifest.contains("train.method = soft_pair\n"));
}

#[test]
fn flags_override_env_which_overrides_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    fs::write(&cfg, "train.epochs = 7\ntrain.seed = 1\nhp.eta = 0.05\n").unwrap();
    let out = dir.path().join("o");
    let o = run(
        &["train", "--config", cfg.to_str().unwrap(), "--epochs", "4", "--out", out_arg(&out)],
        &[("PAIR_GRPO_TRAIN_EPOCHS", "5"), ("PAIR_GRPO_TRAIN_SEED", "9")],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = fs::read_to_string(out.join("manifest.cfg")).unwrap();
    assert!(manifest.contains("train.epochs = 4\n"));
    assert!(manifest.contains("train.seed = 9\n"));
    assert!(manifest.contains("hp.eta = 0.05\n"));
    let rows = fs::read_to_string(out.join("epochs.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows, 4);
}

#[test]
fn identical_train_invocations_match_and_checkpoints_load() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = run(&["train", "--method", "hard_pair", "--epochs", "8", "--out", out_arg(d)], &[("PAIR_GRPO_TRAIN_CHECKPOINT_EVERY", "4")]);
        assert!(o.status.success());
    }
    for f in ["epochs.csv", "final_policy.csv", "checkpoints/epoch_0003.csv", "checkpoints/epoch_0007.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let last = pair_grpo::TabularPolicy::load(a.join("checkpoints/epoch_0007.csv")).unwrap();
    let fin = pair_grpo::TabularPolicy::load(a.join("final_policy.csv")).unwrap();
    assert_eq!(last.logits(), fin.logits());
}

#[test]
fn jobs_one_matches_default_parallelism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let env = [("PAIR_GRPO_COMPARE_SEEDS", "3"), ("PAIR_GRPO_TRAIN_EPOCHS", "6")];
    assert!(run(&["compare", "--jobs", "1", "--out", out_arg(&a)], &env).status.success());
    assert!(run(&["compare", "--jobs", "3", "--out", out_arg(&b)], &env).status.success());
    for f in ["compare.csv", "stability.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn compare_rows_start_from_a_shared_policy() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["compare", "--out", out_arg(dir.path())], &[("PAIR_GRPO_COMPARE_SEEDS", "2"), ("PAIR_GRPO_TRAIN_EPOCHS", "5")]);
    assert!(o.status.success());
    let text = fs::read_to_string(dir.path().join("compare.csv")).unwrap();
    let starts: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect::<Vec<_>>())
        .filter(|r| r[2] == "0")
        .map(|r| r[3])
        .collect();
    assert_eq!(starts.len(), 6);
    assert!(starts.iter().all(|j| *j == starts[0]));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("ordering grpo <= soft_pair <= hard_pair"));
}

#[test]
fn ablate_lists_the_schedules() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["ablate", "--fixed-delta", "--epochs", "10", "--out", out_arg(dir.path())],
        &[("PAIR_GRPO_ABLATE_SEEDS", "2"), ("PAIR_GRPO_ABLATE_EXTRA", "0.03:0.97")],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("ablate.csv")).unwrap();
    let configs: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        configs,
        ["delta0=0.01 gamma=0.99", "delta0=0.02 gamma=0.98", "delta0=0.05 gamma=0.95", "fixed delta=0.02", "delta0=0.03 gamma=0.97"]
    );
}

#[test]
fn literal_clip_changes_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["train", "--literal-clip", "--epochs", "2", "--out", out_arg(dir.path())], &[]);
    assert!(o.status.success());
    let manifest = fs::read_to_string(dir.path().join("manifest.cfg")).unwrap();
    assert!(manifest.contains("hp.clip_mode = product\n"));
}
