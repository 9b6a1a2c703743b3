use std::path::Path;
use std::process::{Command, Output};

use dfrc_core::harness::{read_report, ExperimentConfig};
use serde_json::Value;

fn dfrc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dfrc"))
        .args(args)
        .current_dir(dir)
        .env_remove("DFRC_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    assert!(!out.status.success());
    serde_json::from_slice(&out.stderr).unwrap()
}

fn lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(String::from).collect()
}

#[test]
fn design_writes_solution_and_full_beampattern() {
    let tmp = tempfile::tempdir().unwrap();
    let summary = stdout_json(&dfrc(&["design", "--output-dir", "out"], tmp.path()));
    assert_eq!(summary["result"]["converged"], true);

    let out = tmp.path().join("out");
    let bp = lines(&out.join("beampattern.csv"));
    assert_eq!(bp[0], "angle_deg,transmit,reconstructed");
    assert_eq!(bp.len(), 902);
    assert!(bp[901].starts_with("90,"));
    let design: Value = serde_json::from_str(&std::fs::read_to_string(out.join("design.json")).unwrap()).unwrap();
    assert!(design["solution"].is_object());
}

#[test]
fn attack_writes_both_particle_generations() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["attack", "--observations", "5", "--particles", "50", "--output-dir", "out"];
    let summary = stdout_json(&dfrc(&args, tmp.path()));
    assert!(summary["result"]["label"].is_string());

    let particles = lines(&tmp.path().join("out/particles.csv"));
    assert_eq!(particles[0], "generation,x,y,weight,cell");
    assert_eq!(particles.len(), 1 + 2 * 50);
    assert!(particles[1].starts_with("0,"));
    assert!(particles[100].starts_with("5,"));
}

#[test]
fn sweep_echoes_config_and_writes_one_row_per_point() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "sweep", "--num-runs", "2", "--particles", "50", "--observations", "5", "--sweep", "sigma_sq_dbm=-30,10",
        "--output-dir", "out",
    ];
    let summary = stdout_json(&dfrc(&args, tmp.path()));
    assert_eq!(summary["result"]["points"].as_array().unwrap().len(), 2);

    let out = tmp.path().join("out");
    let rows = lines(&out.join("summary.csv"));
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("point,sigma_sq_dbm,runs,"));

    let report = read_report(&out.join("results.json")).unwrap();
    let expected = ExperimentConfig {
        num_runs: 2,
        particles: 50,
        observations: 5,
        ..ExperimentConfig::desk()
    };
    assert_eq!(report.config.sweep.len(), 1);
    assert_eq!(report.config.sweep[0].values, vec![-30.0, 10.0]);
    assert_eq!(ExperimentConfig { sweep: vec![], ..report.config.clone() }, expected);
    assert_eq!(report.runs.len(), 4);
    assert!(!out.join("particles.csv").exists());
}

#[test]
fn sweep_is_reproducible_from_its_own_echoed_config() {
    let tmp = tempfile::tempdir().unwrap();
    let first = ["sweep", "--num-runs", "2", "--particles", "40", "--observations", "4", "--output-dir", "a"];
    stdout_json(&dfrc(&first, tmp.path()));
    let report = read_report(&tmp.path().join("a/results.json")).unwrap();
    std::fs::write(tmp.path().join("cfg.json"), serde_json::to_string(&report.config).unwrap()).unwrap();

    stdout_json(&dfrc(&["sweep", "--config", "cfg.json", "--workers", "1", "--output-dir", "b"], tmp.path()));
    for file in ["summary.csv", "results.json"] {
        let a = std::fs::read(tmp.path().join("a").join(file)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(file)).unwrap();
        assert!(a == b, "{file} differs");
    }
}

#[test]
fn output_dir_defaults_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_dfrc"))
        .args(["design"])
        .current_dir(tmp.path())
        .env("DFRC_OUTPUT_DIR", "from-env")
        .output()
        .unwrap();
    assert_eq!(stdout_json(&out)["output_dir"], "from-env");
    assert!(tmp.path().join("from-env/beampattern.csv").exists());
}

#[test]
fn oracle_reports_total_variation() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["oracle", "--seeds", "20", "--particles", "100", "--output-dir", "out"];
    let summary = stdout_json(&dfrc(&args, tmp.path()));
    let r = &summary["result"];
    assert_eq!(r["cells"], 16);
    let exact: Vec<f64> = serde_json::from_value(r["exact"].clone()).unwrap();
    assert!((exact.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let tv = r["total_variation"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&tv));
    assert!(tmp.path().join("out/oracle.json").exists());
}

#[test]
fn invalid_config_gives_error_record() {
    let tmp = tempfile::tempdir().unwrap();
    let err = stderr_json(&dfrc(&["design", "--num-tx", "0"], tmp.path()));
    assert_eq!(err["error"], "ConfigError");
    assert!(err["message"].as_str().unwrap().contains("antenna"));

    std::fs::write(tmp.path().join("bad.json"), r#"{"num_tx": 8, "typo": 1}"#).unwrap();
    let out = dfrc(&["sweep", "--config", "bad.json"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "ParseError");
}

#[test]
fn missing_config_file_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dfrc(&["attack", "--config", "nope.json"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "IOError");
}

#[test]
fn bad_flag_values_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [&["sweep", "--sweep", "bogus=1,2"][..], &["design", "--bs-position", "1"], &["frobnicate"]] {
        let out = dfrc(args, tmp.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert_eq!(stderr_json(&out)["error"], "UsageError");
    }
}
