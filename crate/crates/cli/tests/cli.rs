//! Binary-level tests: each stage is driven through the installed `alphamine`
//! executable on a small synthetic universe, checking artifacts and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_alphamine");

/// Small-universe config: two priors, a three-expression GP pool, and a
/// schedule short enough that the whole pipeline finishes in seconds.
const TINY_CONFIG: &str = r#"
seed = 11
window = 12
gp_keep = 3
diversity_k = 2
catalog = [{ name = "MA", n = 5 }, { name = "EMA", n = 12 }]

[synthetic]
tickers = 20
days = 320
signal_strength = 0.4

[split]
train_days = 200
val_days = 30
test_days = 90

[model]
layers = 3
width = 16

[schedule]
pretrain_epochs = 4
pretrain_batch = 16
finetune_steps = 15
days_per_step = 4
eval_every = 5

[gp]
population = 24
generations = 3
fitness_days = 12
window = 12
elitism = 3

[strategy]
keep = 4
"#;

fn run(dir: &Path, config: Option<&Path>, args: &[&str]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.current_dir(dir);
    if let Some(path) = config {
        cmd.arg("--config").arg(path);
    }
    cmd.args(args);
    cmd.output().expect("spawn alphamine")
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed: status {:?}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn setup() -> (TempDir, std::path::PathBuf) {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("tiny.toml");
    fs::write(&config, TINY_CONFIG).unwrap();
    (dir, config)
}

#[test]
fn synth_is_deterministic_across_runs() {
    let (dir, config) = setup();
    for out_name in ["a", "b"] {
        let out = run(
            dir.path(),
            Some(&config),
            &["--out", out_name, "synth"],
        );
        assert_ok(&out, "synth");
    }
    let a = fs::read(dir.path().join("a/panel.csv")).unwrap();
    let b = fs::read(dir.path().join("b/panel.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b, "same config and seed must produce identical panels");
    let header = String::from_utf8_lossy(&a);
    assert!(header.starts_with("date,ticker,"), "panel header: {header:.60}");
}

#[test]
fn seed_flag_overrides_config() {
    let (dir, config) = setup();
    for (out_name, seed) in [("s11", None), ("s12", Some("12")), ("s12b", Some("12"))] {
        let mut args = vec!["--out", out_name];
        if let Some(seed) = seed {
            args.extend(["--seed", seed]);
        }
        args.push("synth");
        assert_ok(&run(dir.path(), Some(&config), &args), "synth");
    }
    let base = fs::read(dir.path().join("s11/panel.csv")).unwrap();
    let with_flag = fs::read(dir.path().join("s12/panel.csv")).unwrap();
    let with_flag_again = fs::read(dir.path().join("s12b/panel.csv")).unwrap();
    assert_ne!(base, with_flag, "--seed must change the generated panel");
    assert_eq!(with_flag, with_flag_again);
}

#[test]
fn config_fallback_reads_alphamine_toml_from_cwd() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("alphamine.toml"), TINY_CONFIG).unwrap();
    let out = run(dir.path(), None, &["--out", "fallback", "synth"]);
    assert_ok(&out, "synth via ./alphamine.toml");
    assert!(dir.path().join("fallback/panel.csv").exists());
}

#[test]
fn full_pipeline_produces_all_artifacts() {
    let (dir, config) = setup();
    let out_dir = dir.path().join("run");
    let out_arg = out_dir.to_str().unwrap();

    assert_ok(&run(dir.path(), Some(&config), &["--out", out_arg, "synth"]), "synth");
    let mine = run(dir.path(), Some(&config), &["--out", out_arg, "mine"]);
    assert_ok(&mine, "mine both");
    let stderr = String::from_utf8_lossy(&mine.stderr);
    assert!(stderr.contains("stage="), "progress lines expected, got:\n{stderr}");

    for manifest in ["gp_manifest.jsonl", "adnn_manifest.jsonl", "gp_adnn_manifest.jsonl"] {
        let text = fs::read_to_string(out_dir.join(manifest)).unwrap();
        assert!(text.lines().count() >= 1, "{manifest} is empty");
    }
    // two catalog entries, three kept expressions, three seeded models
    let adnn = fs::read_to_string(out_dir.join("adnn_manifest.jsonl")).unwrap();
    assert_eq!(adnn.lines().count(), 2);
    let models: Vec<_> = fs::read_dir(out_dir.join("models"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(models.iter().filter(|m| m.starts_with("adnn_")).count(), 2);
    assert_eq!(models.iter().filter(|m| m.starts_with("gp_adnn_")).count(), 3);

    assert_ok(&run(dir.path(), Some(&config), &["--out", out_arg, "eval"]), "eval");
    let eval = fs::read_to_string(out_dir.join("eval.csv")).unwrap();
    let mut pools: Vec<_> = eval.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    pools.sort_unstable();
    assert_eq!(pools, ["adnn", "gp", "gp_adnn"]);
    assert!(out_dir.join("clusters.svg").exists());

    assert_ok(&run(dir.path(), Some(&config), &["--out", out_arg, "backtest"]), "backtest");
    let summary = fs::read_to_string(out_dir.join("backtest_summary.csv")).unwrap();
    let mut rows: Vec<_> = summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    rows.sort_unstable();
    assert_eq!(rows, ["combined", "gp_pk", "new", "pk"]);
    for pool in ["pk", "new", "gp_pk", "combined"] {
        assert!(out_dir.join(format!("nav_{pool}.csv")).exists());
        assert!(out_dir.join(format!("equity_{pool}.svg")).exists());
    }

    assert_ok(&run(dir.path(), Some(&config), &["--out", out_arg, "report"]), "report");
    let report = fs::read_to_string(out_dir.join("report.md")).unwrap();
    assert!(report.contains("| pool |"), "report should embed tables:\n{report}");
}

#[test]
fn gp_only_mine_supports_eval_and_gp_backtest() {
    let (dir, config) = setup();
    let out_dir = dir.path().join("gp_only");
    let out_arg = out_dir.to_str().unwrap();
    assert_ok(&run(dir.path(), Some(&config), &["--out", out_arg, "synth"]), "synth");
    assert_ok(
        &run(dir.path(), Some(&config), &["--out", out_arg, "mine", "--method", "gp"]),
        "mine gp",
    );
    assert!(out_dir.join("gp_manifest.jsonl").exists());
    assert!(!out_dir.join("adnn_manifest.jsonl").exists());

    assert_ok(&run(dir.path(), Some(&config), &["--out", out_arg, "eval"]), "eval");
    let eval = fs::read_to_string(out_dir.join("eval.csv")).unwrap();
    assert_eq!(eval.lines().count(), 2, "gp pool only:\n{eval}");

    // pools needing model manifests are user errors, pk still works
    let missing = run(
        dir.path(),
        Some(&config),
        &["--out", out_arg, "backtest", "--pool", "new"],
    );
    assert_eq!(missing.status.code(), Some(1));
    assert_ok(
        &run(dir.path(), Some(&config), &["--out", out_arg, "backtest", "--pool", "pk"]),
        "backtest pk",
    );
    assert!(out_dir.join("nav_pk.csv").exists());
}

#[test]
fn user_errors_exit_one() {
    let dir = TempDir::new().unwrap();

    // malformed usage is reported by the parser
    let bogus = run(dir.path(), None, &["--bogus"]);
    assert_eq!(bogus.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&bogus.stderr).is_empty());

    // missing config file
    let missing_config = run(dir.path(), Some(Path::new("no_such.toml")), &["synth"]);
    assert_eq!(missing_config.status.code(), Some(1));

    // stages before their inputs exist
    let (cfg_dir, config) = setup();
    for args in [
        vec!["--out", "empty", "mine"],
        vec!["--out", "empty", "eval"],
        vec!["--out", "empty", "backtest"],
        vec!["--out", "empty", "report"],
    ] {
        let out = run(cfg_dir.path(), Some(&config), &args);
        assert_eq!(
            out.status.code(),
            Some(1),
            "{args:?} should fail as a user error:\n{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }

    // invalid config values
    let bad = cfg_dir.path().join("bad.toml");
    fs::write(&bad, "prune_rate = 1.5\n").unwrap();
    let out = run(cfg_dir.path(), Some(&bad), &["synth"]);
    assert_eq!(out.status.code(), Some(1));

    // misspelled keys are rejected, not silently defaulted
    let typo = cfg_dir.path().join("typo.toml");
    fs::write(&typo, "[split]\ntrain = 200\n").unwrap();
    let out = run(cfg_dir.path(), Some(&typo), &["synth"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_and_version_exit_zero() {
    let dir = TempDir::new().unwrap();
    let help = run(dir.path(), None, &["--help"]);
    assert_eq!(help.status.code(), Some(0));
    let text = String::from_utf8_lossy(&help.stdout);
    for sub in ["synth", "mine", "eval", "backtest", "report"] {
        assert!(text.contains(sub), "--help should list `{sub}`:\n{text}");
    }
    let version = run(dir.path(), None, &["--version"]);
    assert_eq!(version.status.code(), Some(0));
}
