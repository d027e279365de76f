//! End-to-end tests of the `covreg` binary: JSON schema, exit codes,
//! determinism and the golden fit on the bundled sample dataset.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_covreg"));
    cmd.env("SOURCE_DATE_EPOCH", "0");
    cmd
}

fn sample_csv() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/sample_covreg.csv")
}

fn golden_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn run_ok(cmd: &mut Command) -> Value {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn run_err(cmd: &mut Command) -> (i32, String) {
    let Output { status, stderr, .. } = cmd.output().expect("binary runs");
    assert!(!status.success());
    (status.code().unwrap_or(-1), String::from_utf8_lossy(&stderr).into_owned())
}

/// Structural JSON comparison with a relative tolerance on numbers, so the
/// golden stays robust to platform libm differences while pinning every
/// value.
fn assert_json_close(a: &Value, b: &Value, path: &str) {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            let tol = 1e-9 * (1.0 + x.abs().max(y.abs()));
            assert!((x - y).abs() <= tol, "{path}: {x} vs {y}");
        }
        (Value::Array(xs), Value::Array(ys)) => {
            assert_eq!(xs.len(), ys.len(), "{path}: array lengths differ");
            for (i, (x, y)) in xs.iter().zip(ys).enumerate() {
                assert_json_close(x, y, &format!("{path}[{i}]"));
            }
        }
        (Value::Object(xs), Value::Object(ys)) => {
            let keys: std::collections::BTreeSet<_> =
                xs.keys().chain(ys.keys()).collect();
            for k in keys {
                if k == "determinism_hash" || k == "timestamp_unix" {
                    continue;
                }
                let (x, y) = (xs.get(k), ys.get(k));
                assert!(
                    x.is_some() && y.is_some(),
                    "{path}.{k}: present in one report only"
                );
                assert_json_close(x.unwrap(), y.unwrap(), &format!("{path}.{k}"));
            }
        }
        _ => assert_eq!(a, b, "{path}"),
    }
}

#[test]
fn golden_fit_on_bundled_sample() {
    let report = run_ok(bin().args([
        "fit",
        "--csv",
        sample_csv().to_str().unwrap(),
        "--y",
        "y1,y2",
        "--x",
        "x0,x1",
        "--seed",
        "7",
    ]));

    let golden = golden_path("fit_sample.json");
    if std::env::var("REGEN_GOLDEN").is_ok() {
        std::fs::create_dir_all(golden.parent().unwrap()).unwrap();
        std::fs::write(&golden, serde_json::to_string_pretty(&report).unwrap()).unwrap();
    }
    let stored: Value =
        serde_json::from_str(&std::fs::read_to_string(&golden).expect(
            "golden file present; regenerate with REGEN_GOLDEN=1",
        ))
        .unwrap();
    assert_json_close(&report, &stored, "$");

    // The estimates recover the generating coefficients.
    let b = &report["params"]["B"][0]["data"];
    let b11 = b[0][0].as_f64().unwrap();
    let share = (0.5f64).sqrt();
    assert!((b11 - share).abs() < 0.3, "B[1,1] = {b11}");
    assert_eq!(report["version"], "1");
    assert_eq!(report["command"], "fit");
}

#[test]
fn mean_design_defaults_to_covariance_design() {
    let implicit = run_ok(bin().args([
        "fit",
        "--csv",
        sample_csv().to_str().unwrap(),
        "--y",
        "y1,y2",
        "--x",
        "x0,x1",
        "--seed",
        "3",
    ]));
    let explicit = run_ok(bin().args([
        "fit",
        "--csv",
        sample_csv().to_str().unwrap(),
        "--y",
        "y1,y2",
        "--x",
        "x0,x1",
        "--w-cols",
        "x0,x1",
        "--seed",
        "3",
    ]));
    assert_json_close(&implicit["params"], &explicit["params"], "params");
    assert_json_close(&implicit["fit"], &explicit["fit"], "fit");
}

#[test]
fn duplicate_column_exits_2_naming_it() {
    let (code, stderr) = run_err(bin().args([
        "fit",
        "--csv",
        sample_csv().to_str().unwrap(),
        "--y",
        "y1,y2",
        "--x",
        "x1,x1",
    ]));
    assert_eq!(code, 2);
    assert!(stderr.contains("x1"), "stderr: {stderr}");
}

#[test]
fn rank_comparison_requires_df() {
    let (code, stderr) = run_err(bin().args([
        "lrtest",
        "--csv",
        sample_csv().to_str().unwrap(),
        "--y",
        "y1,y2",
        "--x",
        "x0,x1",
        "--null-rank",
        "1",
        "--alt-rank",
        "2",
    ]));
    assert_eq!(code, 2);
    assert!(stderr.contains("--df"), "stderr: {stderr}");
}

#[test]
fn lr_statistic_matches_two_fit_runs() {
    let csv = sample_csv();
    let fit = |rank: &str| {
        run_ok(bin().args([
            "fit",
            "--csv",
            csv.to_str().unwrap(),
            "--y",
            "y1,y2",
            "--x",
            "x0,x1",
            "--rank",
            rank,
            "--seed",
            "11",
        ]))["fit"]["loglik"]
            .as_f64()
            .unwrap()
    };
    let ll1 = fit("1");
    let ll2 = fit("2");
    let test = run_ok(bin().args([
        "lrtest",
        "--csv",
        csv.to_str().unwrap(),
        "--y",
        "y1,y2",
        "--x",
        "x0,x1",
        "--null-rank",
        "1",
        "--alt-rank",
        "2",
        "--df",
        "4",
        "--seed",
        "11",
    ]));
    let stat = test["test"]["statistic"].as_f64().unwrap();
    let expect = (2.0 * (ll2 - ll1)).max(0.0);
    assert!(
        (stat - expect).abs() < 1e-8,
        "statistic {stat} vs 2*(ll2-ll1) = {expect}"
    );
    assert_eq!(test["test"]["df"], 4);
}

#[test]
fn simulate_is_byte_identical_per_seed() {
    let args = [
        "simulate", "--w", "0", "--n", "60", "--reps", "5", "--seed", "9",
    ];
    let out1 = bin().args(args).output().unwrap();
    let out2 = bin().args(args).output().unwrap();
    assert!(out1.status.success());
    assert_eq!(out1.stdout, out2.stdout, "same seed must be byte-identical");

    let other = bin()
        .args(["simulate", "--w", "0", "--n", "60", "--reps", "5", "--seed", "10"])
        .output()
        .unwrap();
    let v1: Value = serde_json::from_slice(&out1.stdout).unwrap();
    let v2: Value = serde_json::from_slice(&other.stdout).unwrap();
    assert_ne!(v1["determinism_hash"], v2["determinism_hash"]);
}

#[test]
fn rank_deficient_design_exits_3() {
    // Two identical constant columns make XᵀX singular.
    let (code, stderr) = run_err(bin().args([
        "fit",
        "--csv",
        sample_csv().to_str().unwrap(),
        "--y",
        "y1,y2",
        "--x",
        "x0,one",
        "--derive",
        "one=const(1)",
    ]));
    assert_eq!(code, 3, "stderr: {stderr}");
}

#[test]
fn strict_nonconvergence_exits_4() {
    let (code, _) = run_err(bin().args([
        "fit",
        "--csv",
        sample_csv().to_str().unwrap(),
        "--y",
        "y1,y2",
        "--x",
        "x0,x1",
        "--strict",
        "--max-iters",
        "1",
    ]));
    assert_eq!(code, 4);
}

#[test]
fn predict_region_centers_are_inside_and_json_is_consistent() {
    let dir = tempfile::tempdir().unwrap();

    // Grouped data: five ages, strong variance growth in age.
    let mut csv = String::from("age,y1,y2\n");
    let mut state = 88u64;
    let mut unif = || {
        // xorshift, plenty for a smoke dataset
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    for age in 1..=5 {
        for _ in 0..50 {
            let s = age as f64;
            let y1 = 0.3 * s + s * unif();
            let y2 = -0.2 * s + s * unif() + 0.5 * y1;
            csv.push_str(&format!("{age},{y1},{y2}\n"));
        }
    }
    let csv_path = dir.path().join("grouped.csv");
    std::fs::write(&csv_path, &csv).unwrap();

    let fit_path = dir.path().join("fit.json");
    run_ok(bin().args([
        "fit",
        "--csv",
        csv_path.to_str().unwrap(),
        "--y",
        "y1,y2",
        "--x",
        "one,age",
        "--derive",
        "one=const(1)",
        "--seed",
        "4",
        "--json-out",
        fit_path.to_str().unwrap(),
    ]));

    let report = run_ok(bin().args([
        "predict-region",
        "--csv",
        csv_path.to_str().unwrap(),
        "--fit",
        fit_path.to_str().unwrap(),
        "--group-col",
        "age",
        "--level",
        "0.9",
    ]));
    let regions = report["regions"].as_array().unwrap();
    assert_eq!(regions.len(), 5);
    assert!((report["chi2_threshold"].as_f64().unwrap() - 4.605170185988091).abs() < 1e-9);

    // Audit a CSV holding exactly the region centers: every center lies
    // inside its own region.
    let mut center_csv = String::from("age,y1,y2\n");
    for r in regions {
        let c = r["center"].as_array().unwrap();
        center_csv.push_str(&format!(
            "{},{},{}\n",
            r["group"].as_str().unwrap(),
            c[0].as_f64().unwrap(),
            c[1].as_f64().unwrap()
        ));
    }
    let center_path = dir.path().join("centers.csv");
    std::fs::write(&center_path, &center_csv).unwrap();
    let audit = run_ok(bin().args([
        "predict-region",
        "--csv",
        center_path.to_str().unwrap(),
        "--fit",
        fit_path.to_str().unwrap(),
        "--group-col",
        "age",
    ]));
    for r in audit["regions"].as_array().unwrap() {
        assert_eq!(r["coverage"].as_f64().unwrap(), 1.0, "group {}", r["group"]);
    }

    // Grid filtering and the missing-group warning.
    let filtered = run_ok(bin().args([
        "predict-region",
        "--csv",
        csv_path.to_str().unwrap(),
        "--fit",
        fit_path.to_str().unwrap(),
        "--group-col",
        "age",
        "--grid",
        "2,3,99",
    ]));
    assert_eq!(filtered["regions"].as_array().unwrap().len(), 2);
    let warnings = filtered["warnings"].as_array().unwrap();
    assert!(warnings.iter().any(|w| w.as_str().unwrap().contains("99")));
}

#[test]
fn additive_simulation_dispatch() {
    let report = run_ok(bin().args([
        "simulate",
        "--design",
        "additive",
        "--w",
        "0.3333",
        "--n",
        "50",
        "--reps",
        "2",
        "--seed",
        "21",
    ]));
    assert_eq!(report["scenario"]["study"], "additive");
    assert!(report["study"]["g_win_fraction"].is_number());
    assert!(report["study"]["mean_g_fit"].is_number());
}
