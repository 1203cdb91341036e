//! End-to-end tests of the `optiline` binary: exit codes, output files,
//! the aggregate subcommand, and cross-mode agreement.

use std::path::Path;
use std::process::Command;

use optiline::runner::ExperimentConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_optiline"))
}

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        n_cycles: 8,
        n_repetitions: 2,
        seeds: vec![5, 6],
        phase1_cycles: 2,
        ..ExperimentConfig::default()
    }
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

#[test]
fn run_writes_reports_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    for rep in [
        "repetition_01.csv",
        "repetition_02.csv",
        "bus_stats_01.csv",
        "aggregate.csv",
    ] {
        assert!(out.join(rep).exists(), "missing {rep}");
    }
    let report = std::fs::read_to_string(out.join("repetition_01.csv")).unwrap();
    assert!(report.starts_with("cycle,pipeline_id,x,y,predicted_optimum,pred_error,cpu_ms,model_bytes,selected,adapted,drift"));
    // records for cycles 5..=8 over 4 pipelines
    assert_eq!(report.lines().count(), 1 + 4 * 4);
}

#[test]
fn invalid_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &ExperimentConfig {
            n_cycles: 3, // below the 5-point design
            ..small_config()
        },
    );
    let output = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("n_cycles"));
}

#[test]
fn missing_config_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["run", "--config"])
        .arg(dir.path().join("nope.json"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_three_and_cleans_outputs() {
    let dir = tempfile::tempdir().unwrap();
    // a schema directory that overrides "reports" with an unsatisfiable
    // schema makes the run fail mid-repetition
    let schemas = dir.path().join("schemas");
    std::fs::create_dir(&schemas).unwrap();
    std::fs::write(
        schemas.join("reports.json"),
        r#"{"topic": "reports", "fields": [{"name": "nonexistent", "kind": "text", "required": true}]}"#,
    )
    .unwrap();
    let mut cfg = small_config();
    cfg.schema_dir = Some(schemas);
    let config = write_config(dir.path(), &cfg);
    let out = dir.path().join("out");
    let output = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    // partial outputs removed
    let leftovers: Vec<_> = std::fs::read_dir(&out)
        .map(|entries| entries.filter_map(|e| e.ok()).collect())
        .unwrap_or_default();
    assert!(
        leftovers.is_empty(),
        "partial outputs left behind: {leftovers:?}"
    );
}

#[test]
fn aggregate_subcommand_matches_run_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let out = dir.path().join("out");
    assert!(bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let rebuilt = dir.path().join("rebuilt.csv");
    let status = bin()
        .args(["aggregate", "--out"])
        .arg(&rebuilt)
        .arg(out.join("repetition_01.csv"))
        .arg(out.join("repetition_02.csv"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert_eq!(
        std::fs::read_to_string(rebuilt).unwrap(),
        std::fs::read_to_string(out.join("aggregate.csv")).unwrap()
    );
}

#[test]
fn concurrent_mode_flag_runs_clean() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--mode", "conc", "--seed-offset", "3", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(out.join("aggregate.csv").exists());
}
