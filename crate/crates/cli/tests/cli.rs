use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::DMatrix;
use plg_cli::io::{format_f64, read_samples, write_dataset_csv};
use plg_cli::reports::SummaryFile;
use plg_cli::{ingest_csv, CliError};
use plg_core::output::summarize_matrix;
use plg_core::Dataset;
use serde_json::Value;
use tempfile::TempDir;

fn plg(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plg"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn plg_env(args: &[&str], dir: &Path, key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plg"))
        .args(args)
        .current_dir(dir)
        .env(key, value)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/schemas")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_valid(schema: &str, doc: &Path) {
    let schema = read_json(&schema_dir().join(schema));
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let instance = read_json(doc);
    let errors: Vec<String> = validator.iter_errors(&instance).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{} fails its schema: {errors:#?}", doc.display());
}

/// Deterministic design with a sparse truth and a little noise.
fn toy_dataset(n: usize, p: usize) -> Dataset {
    let x = DMatrix::from_fn(n, p, |i, j| ((i * 7 + j * 3) as f64 * 0.37).sin() + 0.1 * j as f64);
    let y: Vec<f64> = (0..n)
        .map(|i| x[(i, 0)] - 0.5 * x[(i, p - 1)] + 0.2 * ((i as f64) * 1.3).cos())
        .collect();
    Dataset::new(y.into(), x).unwrap()
}

fn write_toy(dir: &Path, n: usize, p: usize) -> PathBuf {
    let path = dir.join("data.csv");
    write_dataset_csv(&path, &toy_dataset(n, p)).unwrap();
    path
}

#[test]
fn ingest_small_file() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("d.csv");
    fs::write(&path, "y,x1,x2\n1.0,2,3\n-1,0.5,4\n2.5,1e-3,-7\n").unwrap();
    let data = ingest_csv(&path).unwrap();
    assert_eq!((data.n(), data.p()), (3, 2));
    assert_eq!(data.y().as_slice(), &[1.0, -1.0, 2.5]);
    assert_eq!(data.x()[(2, 0)], 1e-3);
    assert_eq!(data.x()[(2, 1)], -7.0);
}

#[test]
fn ingest_names_bad_cell() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("d.csv");
    fs::write(&path, "y,x1,x2\n1.0,abc,3\n2,1,1\n").unwrap();
    let err = ingest_csv(&path).unwrap_err();
    match &err {
        CliError::Cell { row, column, .. } => assert_eq!((*row, column.as_str()), (2, "x1")),
        other => panic!("unexpected error {other:?}"),
    }
    let msg = err.to_string();
    assert!(msg.contains("row 2") && msg.contains("\"x1\""), "{msg}");
}

#[test]
fn ingest_rejects_missing_and_malformed() {
    let dir = TempDir::new().unwrap();
    let cases = [
        ("y,x1\n1,\n", "missing value"),
        ("y,x1\n1,NA\n", "missing value"),
        ("y,x1\n1,inf\n", "finite"),
        ("resp,x1\n1,2\n", "\"y\""),
        ("y\n1\n", "no predictor"),
        ("y,x1\n", "no data rows"),
        ("y,x1\n1,2,3\n", "fields"),
    ];
    for (i, (text, needle)) in cases.iter().enumerate() {
        let path = dir.path().join(format!("bad{i}.csv"));
        fs::write(&path, text).unwrap();
        let msg = ingest_csv(&path).unwrap_err().to_string();
        assert!(msg.contains(needle), "case {i}: {msg}");
    }
    assert!(matches!(ingest_csv(dir.path().join("absent.csv")), Err(CliError::Io { .. })));
}

#[test]
fn dataset_round_trips_exactly() {
    let dir = TempDir::new().unwrap();
    let x = DMatrix::from_fn(5, 3, |i, j| match (i + j) % 4 {
        0 => 1e-300 * (i + 1) as f64,
        1 => std::f64::consts::PI * (j + 1) as f64,
        2 => -1.0 / 3.0,
        _ => 123456789.123456789e10,
    });
    let y = vec![0.1 + 0.2, 1e308, -5e-324, 2.0f64.sqrt(), 0.0];
    let data = Dataset::new(y.into(), x).unwrap();
    let path = dir.path().join("rt.csv");
    write_dataset_csv(&path, &data).unwrap();
    let back = ingest_csv(&path).unwrap();
    assert_eq!(back, data);
    for v in [0.1 + 0.2, 1e-300, -5e-324, 1.0] {
        assert_eq!(format_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }
}

#[test]
fn fit_writes_expected_shapes_and_valid_reports() {
    let dir = TempDir::new().unwrap();
    write_toy(dir.path(), 5, 2);
    let o = plg(
        &["fit", "--model", "bfl", "--data", "data.csv", "--iters", "10", "--burnin", "0", "--out", "run"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let (labels, draws) = read_samples(dir.path().join("run/samples_0.csv")).unwrap();
    assert_eq!(labels, ["beta.1", "beta.2", "tau2.1", "tau2.2", "w2.1", "sigma2"]);
    assert_eq!((draws.nrows(), draws.ncols()), (10, 6));
    assert_valid("summary.v1.json", &dir.path().join("run/summary.json"));
    assert_valid("drift.v1.json", &dir.path().join("run/drift.json"));
}

#[test]
fn same_seed_gives_identical_samples() {
    let dir = TempDir::new().unwrap();
    write_toy(dir.path(), 12, 4);
    let args = |out: &'static str| {
        vec!["fit", "--model", "bsgl", "--data", "data.csv", "--groups", "2,2", "--iters", "300", "--seed", "9", "--out", out]
    };
    assert!(plg(&args("a"), dir.path()).status.success());
    assert!(plg(&args("b"), dir.path()).status.success());
    let a = fs::read(dir.path().join("a/samples_0.csv")).unwrap();
    let b = fs::read(dir.path().join("b/samples_0.csv")).unwrap();
    assert_eq!(a, b);
    let (labels, m) = read_samples(dir.path().join("a/samples_0.csv")).unwrap();
    assert_eq!(labels.len(), 4 + 2 + 4 + 1);
    assert_eq!(m.nrows(), 270);
}

#[test]
fn drift_report_rate_for_ten_by_five() {
    let dir = TempDir::new().unwrap();
    write_toy(dir.path(), 10, 5);
    let o = plg(
        &["fit", "--model", "bfl", "--data", "data.csv", "--alpha", "1", "--iters", "20", "--out", "run"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let drift = read_json(&dir.path().join("run/drift.json"));
    assert_eq!(drift["phi"].as_f64(), Some(0.5));
    assert_eq!(drift["schema_version"], "1");
    let l = drift["L"].as_f64().unwrap();
    assert_eq!(drift["d"].as_f64(), Some(2.0 * l / (1.0 - 0.5)));
    assert!(drift["epsilon"].as_f64().unwrap() > 0.0);
}

#[test]
fn multiple_chains_use_distinct_streams() {
    let dir = TempDir::new().unwrap();
    write_toy(dir.path(), 10, 3);
    let args = ["fit", "--model", "bgl", "--data", "data.csv", "--groups", "1,2", "--iters", "200", "--chains", "3", "--out", "run"];
    let o = plg(&args, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let c0 = fs::read(dir.path().join("run/samples_0.csv")).unwrap();
    let c1 = fs::read(dir.path().join("run/samples_1.csv")).unwrap();
    assert!(dir.path().join("run/samples_2.csv").exists());
    assert_ne!(c0, c1);
    let summary: SummaryFile = serde_json::from_value(read_json(&dir.path().join("run/summary.json"))).unwrap();
    assert_eq!(summary.chains.len(), 3);
    assert_eq!(summary.between_within.unwrap()[0].chain_means.len(), 3);
    assert_valid("summary.v1.json", &dir.path().join("run/summary.json"));

    let single = plg_env(&args, dir.path(), "PLG_THREADS", "1");
    assert!(single.status.success());
    assert_eq!(fs::read(dir.path().join("run/samples_1.csv")).unwrap(), c1);
}

#[test]
fn diagnose_matches_in_process_summary() {
    let dir = TempDir::new().unwrap();
    write_toy(dir.path(), 8, 2);
    assert!(plg(&["fit", "--model", "bfl", "--data", "data.csv", "--iters", "400", "--out", "run"], dir.path())
        .status
        .success());
    let o = plg(&["diagnose", "run/samples_0.csv", "run/samples_0.csv", "--out", "diag.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_valid("summary.v1.json", &dir.path().join("diag.json"));
    let summary: SummaryFile = serde_json::from_value(read_json(&dir.path().join("diag.json"))).unwrap();
    assert_eq!(summary.chains[0].summary.parameters, summary.chains[1].summary.parameters);
    let (labels, m) = read_samples(dir.path().join("run/samples_0.csv")).unwrap();
    let direct = summarize_matrix(&labels, &m).unwrap();
    for (a, b) in summary.chains[0].summary.parameters.iter().zip(&direct.parameters) {
        assert_eq!(a.mcse, b.mcse, "{}", a.label);
        assert_eq!(a.mean, b.mean);
    }
    let between = summary.between_within.unwrap();
    assert!(between.iter().all(|b| b.between == 0.0));
}

#[test]
fn verify_all_passes_and_report_validates() {
    let dir = TempDir::new().unwrap();
    let o = plg(&["verify", "--suite", "all", "--out", "report.json"], dir.path());
    assert!(o.status.success(), "{}\n{}", String::from_utf8_lossy(&o.stdout), stderr(&o));
    assert_valid("report.v1.json", &dir.path().join("report.json"));
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["passed"], true);
    assert!(report["checks"].as_array().unwrap().len() >= 10);
}

#[test]
fn mutated_kernel_fails_verification() {
    let dir = TempDir::new().unwrap();
    for mutation in ["sigma-shape", "update-order", "missing-xi"] {
        let o = plg(&["verify", "--suite", "geweke", "--mutation", mutation, "--out", "report.json"], dir.path());
        assert_eq!(o.status.code(), Some(1), "{mutation}");
        assert_valid("report.v1.json", &dir.path().join("report.json"));
        assert_eq!(read_json(&dir.path().join("report.json"))["mutation"], mutation);
    }
}

#[test]
fn usage_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    write_toy(dir.path(), 6, 2);
    let cases: [&[&str]; 6] = [
        &["verify", "--suite", "nonsense"],
        &["frobnicate"],
        &["fit", "--model", "bgl", "--data", "data.csv"],
        &["fit", "--model", "bfl", "--data", "data.csv", "--groups", "1,1"],
        &["fit", "--model", "lasso", "--data", "data.csv"],
        &["fit", "--model", "bfl", "--data", "data.csv", "--init", "somewhere"],
    ];
    for args in cases {
        assert_eq!(plg(args, dir.path()).status.code(), Some(2), "{args:?}");
    }
    let o = plg_env(&["verify", "--suite", "drift"], dir.path(), "PLG_THREADS", "zero");
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    write_toy(dir.path(), 6, 3);
    fs::write(dir.path().join("bad.csv"), "y,x1\n1,zz\n").unwrap();
    let cases: [&[&str]; 4] = [
        &["fit", "--model", "bfl", "--data", "missing.csv"],
        &["fit", "--model", "bfl", "--data", "bad.csv"],
        &["fit", "--model", "bgl", "--data", "data.csv", "--groups", "1,1"],
        &["fit", "--model", "bfl", "--data", "data.csv", "--lambda1=-1"],
    ];
    for args in cases {
        let o = plg(args, dir.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).starts_with("error:"));
    }
    let o = plg(&["fit", "--model", "bfl", "--data", "bad.csv"], dir.path());
    assert!(stderr(&o).contains("row 2, column \"x1\""), "{}", stderr(&o));
}

#[test]
fn init_from_state_file() {
    let dir = TempDir::new().unwrap();
    write_toy(dir.path(), 6, 2);
    fs::write(
        dir.path().join("state.json"),
        r#"{"model":"bfl","beta":[0.5,-0.5],"tau2":[1.0,2.0],"w2":[0.5],"sigma2":1.0}"#,
    )
    .unwrap();
    let o = plg(
        &["fit", "--model", "bfl", "--data", "data.csv", "--iters", "5", "--init", "file:state.json", "--out", "run"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = read_json(&dir.path().join("run/summary.json"));
    assert!(summary["chains"][0]["summary"]["config"]["init"]["custom"].is_object());

    fs::write(dir.path().join("wrong.json"), r#"{"model":"bgl","beta":[0.5,-0.5],"tau2":[1.0],"sigma2":1.0}"#).unwrap();
    let o = plg(&["fit", "--model", "bfl", "--data", "data.csv", "--iters", "5", "--init", "file:wrong.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}
