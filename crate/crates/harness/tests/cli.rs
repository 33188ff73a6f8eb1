//! End-to-end checks of the `linmix` binary: exit codes, printed output, and
//! the files an experiment run leaves behind.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_linmix"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("linmix-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

const CONFIG: &str = r#"{
  "n": 200,
  "measurement_ratios": [0.3],
  "prior": "sparse-gaussian:0.05:1.0",
  "channel": "awgn:1e-3",
  "estimators": ["metric-optimal:abs", "relaxed-bp-mean"],
  "metrics_reported": ["abs", "linf"],
  "trials": 2,
  "master_seed": 5
}"#;

#[test]
fn estimate_prints_error_table() {
    let dir = temp_dir("estimate");
    let cfg = dir.join("cfg.json");
    std::fs::write(&cfg, CONFIG).unwrap();
    let out = bin().args(["estimate", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("metric-optimal:abs"));
    assert!(stdout.contains("linf"));
    assert!(stdout.contains("mu="));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn bad_config_exits_with_code_two() {
    let dir = temp_dir("badcfg");
    let cfg = dir.join("cfg.json");
    std::fs::write(&cfg, CONFIG.replace("\"n\": 200,", "\"n\": 200, \"mystery\": 1,")).unwrap();
    let out = bin().args(["estimate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let cfg_bad_prior = dir.join("cfg2.json");
    std::fs::write(&cfg_bad_prior, CONFIG.replace("sparse-gaussian:0.05:1.0", "cauchy:1")).unwrap();
    let out = bin()
        .args(["estimate", "--config"])
        .arg(&cfg_bad_prior)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn experiment_writes_csv_and_svg() {
    let dir = temp_dir("experiment");
    let cfg = dir.join("cfg.json");
    std::fs::write(&cfg, CONFIG).unwrap();
    let out_dir = dir.join("results");
    let out = bin()
        .args(["experiment", "--preset", "custom", "--config"])
        .arg(&cfg)
        .args(["--svg", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let records = std::fs::read_to_string(out_dir.join("records.csv")).unwrap();
    assert!(records.starts_with("preset,n,m,ratio,trial,seed,estimator,metric,error,diverged"));
    // 2 trials x 2 estimators x 2 metrics
    assert_eq!(records.lines().count(), 1 + 8);
    assert!(out_dir.join("aggregate.csv").exists());
    assert!(out_dir.join("summary.txt").exists());
    assert!(out_dir.join("abs.svg").exists());
    assert!(out_dir.join("linf.svg").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn limits_subcommand_prints_values() {
    let out = bin()
        .args([
            "limits", "--metric", "support", "--s", "0.03", "--sigma2", "1.0", "--mu", "3e-4",
            "--n", "10000",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("mmsue = "));
    assert!(stdout.contains("tau = "));

    let out = bin()
        .args([
            "limits", "--metric", "abs", "--s", "0.03", "--sigma2", "1.0", "--mu", "3e-4", "--n",
            "10000",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("mmae = "));

    let out = bin()
        .args(["limits", "--metric", "huber", "--s", "0.03", "--mu", "3e-4", "--n", "10"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
