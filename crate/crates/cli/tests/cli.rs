use std::path::{Path, PathBuf};
use std::process::Command;

use loophole_core::analytic::cap_overlap_fraction;
use loophole_lab::output::sig9;
use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_loophole-lab");

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run_with_env(args: &[&str], env: &[(&str, &str)]) -> Run {
    let out = Command::new(BIN).args(args).envs(env.iter().copied()).output().unwrap();
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn run(args: &[&str]) -> Run {
    run_with_env(args, &[])
}

fn write_config(dir: &TempDir, name: &str, beta_deg: f64, n_pairs: u64, extra: &str) -> PathBuf {
    let path = dir.path().join(name);
    let text = format!(
        r#"{{"schemaVersion": 1, "nPairs": {n_pairs}, "seed": 5{extra},
            "detectorA": {{"nHalfAngleDeg": {beta_deg}}},
            "detectorB": {{"nHalfAngleDeg": {beta_deg}}}}}"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn json(run: &Run) -> Value {
    assert_eq!(run.code, 0, "{}", run.stderr);
    serde_json::from_str(&run.stdout).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn predict_perfect_detection_row() {
    let r = run(&["predict", "--beta", "90", "--phi-steps", "5"]);
    assert_eq!(r.code, 0);
    let rows = csv_rows(&r.stdout);
    assert_eq!(rows.len(), 5);
    let row = rows.iter().find(|row| row[0] == "45.0000000").unwrap();
    assert_eq!(row[4], "0.500000000");
    // Manifest goes to stderr when the table goes to stdout.
    let manifest: Value = serde_json::from_str(&r.stderr).unwrap();
    assert_eq!(manifest["seed"], 0);
}

#[test]
fn predict_matches_closed_form() {
    let r = run(&["predict", "--beta", "75", "--phi-steps", "5"]);
    let rows = csv_rows(&r.stdout);
    let row = rows.iter().find(|row| row[0] == "90.0000000").unwrap();
    let expected = cap_overlap_fraction(45f64.to_radians(), 75f64.to_radians()).unwrap();
    assert_eq!(row[1], sig9(expected));
}

#[test]
fn predict_leaves_undefined_cells_empty() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("curve.csv");
    let r = run(&["predict", "--beta", "30", "--out", p(&out)]);
    assert_eq!(r.code, 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(!text.to_lowercase().contains("nan"));
    let rows = csv_rows(&text);
    let at_90 = rows.iter().find(|row| row[0] == "90.0000000").unwrap();
    assert_eq!(at_90[4], "");
    for row in &rows {
        let total: f64 = row[3].parse().unwrap();
        assert_eq!(row[4].is_empty(), total == 0.0, "phi {}", row[0]);
    }
    assert!(dir.path().join("curve.csv.manifest.json").exists());
}

#[test]
fn simulate_is_reproducible_and_linear() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "c.json", 90.0, 400_000, "");
    let args = ["simulate", "--config", p(&config), "--a", "0", "--b", "45"];
    let mut first = json(&run(&args));
    let mut second = json(&run_with_env(&args, &[("LOOPHOLE_LAB_THREADS", "1")]));
    let nn = first["nn"].as_f64().unwrap();
    let n = first["emitted"].as_f64().unwrap();
    assert!((nn / n - 0.375).abs() < 4.0 * (0.375 * 0.625 / n).sqrt());
    first["manifest"]["timestamp"] = Value::Null;
    second["manifest"]["timestamp"] = Value::Null;
    assert_eq!(first, second);
}

#[test]
fn config_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let zero = write_config(&dir, "zero.json", 75.0, 0, "");
    let unknown = write_config(&dir, "unknown.json", 75.0, 10, r#", "beta": 75"#);
    let version = dir.path().join("v2.json");
    std::fs::write(
        &version,
        std::fs::read_to_string(write_config(&dir, "ok.json", 75.0, 10, ""))
            .unwrap()
            .replace("\"schemaVersion\": 1", "\"schemaVersion\": 2"),
    )
    .unwrap();
    for config in [&zero, &unknown, &version, &dir.path().join("missing.json")] {
        let r = run(&["simulate", "--config", p(config)]);
        assert_eq!(r.code, 2, "{}: {}", config.display(), r.stderr);
        assert!(!r.stderr.is_empty());
    }
    let ok = dir.path().join("ok.json");
    assert_eq!(run(&["test", "--config", p(&ok), "--angles", "0,90,x,135"]).code, 2);
    assert_eq!(run(&["oracle", "--alpha", "abc", "--beta", "75"]).code, 2);
    assert_eq!(run(&["oracle", "--alpha", "100", "--beta", "75"]).code, 2);
    assert_eq!(
        run_with_env(&["predict", "--beta", "75"], &[("LOOPHOLE_LAB_THREADS", "-1")]).code,
        2
    );
    assert_eq!(run(&["predict", "--beta", "75", "--phi-max", "200"]).code, 2);
}

#[test]
fn chsh_test_reports() {
    let dir = TempDir::new().unwrap();
    let lossy = write_config(&dir, "b75.json", 75.0, 300_000, "");
    let observed = json(&run(&["test", "--config", p(&lossy)]));
    let s = observed["sValue"].as_f64().unwrap();
    let se = observed["standardError"].as_f64().unwrap();
    assert!((s - 3.331).abs() < 4.0 * se + 1e-3, "{s}");
    assert_eq!(observed["violatesClassical"], true);

    let emitted = json(&run(&["test", "--config", p(&lossy), "--estimator", "emitted"]));
    assert!(emitted["sValue"].as_f64().unwrap().abs() <= 2.0);
    assert_eq!(emitted["violatesClassical"], false);

    let perfect = write_config(&dir, "b90.json", 90.0, 300_000, "");
    let r = json(&run(&["test", "--config", p(&perfect)]));
    let s = r["sValue"].as_f64().unwrap();
    assert!((s - 2.0).abs() < 4.0 * r["standardError"].as_f64().unwrap());
}

#[test]
fn undefined_chsh_serialises_as_null() {
    let dir = TempDir::new().unwrap();
    let narrow = write_config(&dir, "b30.json", 30.0, 50_000, "");
    let r = run(&["test", "--config", p(&narrow), "--angles", "0,90,90,180"]);
    assert!(!r.stdout.contains("NaN"));
    assert_eq!(json(&r)["sValue"], Value::Null);
}

#[test]
fn subtraction_flag_inflates_s() {
    let dir = TempDir::new().unwrap();
    let noisy = write_config(&dir, "dark.json", 90.0, 300_000, r#", "darkRate": 0.05"#);
    let raw = json(&run(&["test", "--config", p(&noisy)]))["sValue"].as_f64().unwrap();
    let adjusted = json(&run(&["test", "--config", p(&noisy), "--subtract-accidentals"]));
    assert!(adjusted["sValue"].as_f64().unwrap() > raw);
    assert!(adjusted["adjusted"].as_array().unwrap().len() == 4);
}

#[test]
fn scan_writes_table_and_diagnostics() {
    let dir = TempDir::new().unwrap();
    for (beta, variation_positive) in [(90.0, false), (75.0, true)] {
        let config = write_config(&dir, "scan.json", beta, 200_000, "");
        let out = dir.path().join("scan.csv");
        let diag = dir.path().join("diag.json");
        let r = run(&[
            "scan",
            "--config",
            p(&config),
            "--out",
            p(&out),
            "--diagnostics",
            p(&diag),
        ]);
        assert_eq!(r.code, 0, "{}", r.stderr);
        let rows = csv_rows(&std::fs::read_to_string(&out).unwrap());
        assert_eq!(rows.len(), 13);
        let d: Value = serde_json::from_str(&std::fs::read_to_string(&diag).unwrap()).unwrap();
        let variation = d["totalRateMaxRelativeVariation"].as_f64().unwrap();
        if variation_positive {
            assert!(variation > 0.1);
            assert!((d["totalRateMinAtPhiDeg"].as_f64().unwrap() - 90.0).abs() <= 15.0);
        } else {
            assert_eq!(variation, 0.0);
        }
        assert!(d["manifest"]["configDigest"].as_str().unwrap().len() == 64);
    }
}

#[test]
fn scan_ab_grid() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "grid.json", 75.0, 20_000, "");
    let r = run(&[
        "scan",
        "--config",
        p(&config),
        "--a-values",
        "0,90",
        "--b-values",
        "0,45,90",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(csv_rows(&r.stdout).len(), 6);
}

#[test]
fn oracle_disjoint_caps_all_zero() {
    let r = run(&[
        "oracle",
        "--alpha",
        "80",
        "--beta",
        "75",
        "--polar-steps",
        "400",
        "--azimuth-steps",
        "800",
    ]);
    assert_eq!(r.code, 0);
    let row = &csv_rows(&r.stdout)[0];
    for cell in &row[2..5] {
        assert_eq!(cell.parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn oracle_default_grid_within_tolerance() {
    let r = run(&["oracle", "--mc-samples", "0"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows = csv_rows(&r.stdout);
    assert_eq!(rows.len(), 100);
    for row in rows {
        assert!(row[4].is_empty());
        assert!(row[6].parse::<f64>().unwrap().abs() < 1e-4, "{row:?}");
    }
}

#[test]
fn ch74_runs() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, "ch74.json", 90.0, 100_000, "");
    let r = json(&run(&["ch74", "--config", p(&config)]));
    assert_eq!(r["rateRemoved"].as_f64().unwrap(), 1.0);
    assert!(r["rate22_5"].as_f64().is_some());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            loophole_lab::config::ConfigFile::load(&path).unwrap();
            seen += 1;
        }
    }
    assert!(seen >= 5);
}
