use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const QUICK_FIT: &[&str] = &[
    "--outer-rounds",
    "5",
    "--adam-steps",
    "20",
    "--kmeans-restarts",
    "5",
    "--epochs",
    "150",
    "--hidden",
    "8,8",
];

fn tvmix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tvmix")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = tvmix(args);
    assert!(
        out.status.success(),
        "tvmix {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn table(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let head = r.headers().unwrap().iter().map(str::to_owned).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|c| c.parse().unwrap()).collect())
        .collect();
    (head, rows)
}

/// Simulated d = 1 data plus a quick fit on it.
fn fitted(tmp: &TempDir) -> (PathBuf, PathBuf) {
    let sim = tmp.path().join("sim");
    ok(&["simulate", "--n-t", "100", "--grid", "6", "--seed", "3", "--out", s(&sim)]);
    let data = sim.join("replicate_000.csv");
    let fit = tmp.path().join("fit");
    let mut args = vec!["fit", "--data", s(&data), "--k", "3", "--out", s(&fit)];
    args.extend_from_slice(QUICK_FIT);
    ok(&args);
    (data, fit.join("model.json"))
}

#[test]
fn simulate_is_deterministic_and_writes_replicates() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        ok(&["simulate", "--d", "1", "--n-t", "100", "--grid", "11", "--replicates", "2", "--seed", "7", "--out", s(dir)]);
    }
    for name in ["replicate_000.csv", "replicate_001.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
    }
    assert_ne!(fs::read(a.join("replicate_000.csv")).unwrap(), fs::read(a.join("replicate_001.csv")).unwrap());
    let m = manifest(&a);
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["config"]["args"]["seed"], 7);
    assert_eq!(m["config"]["truth"]["times"].as_array().unwrap().len(), 11);
}

#[test]
fn simulate_high_dimension_has_ten_value_columns() {
    let tmp = TempDir::new().unwrap();
    ok(&["simulate", "--d", "10", "--n-t", "5", "--grid", "3", "--out", s(tmp.path())]);
    let mut r = csv::Reader::from_path(tmp.path().join("replicate_000.csv")).unwrap();
    assert_eq!(r.headers().unwrap().len(), 12);
    for rec in r.records() {
        assert_eq!(rec.unwrap().len(), 12);
    }
}

#[test]
fn fit_writes_loadable_model_and_echoes_config() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    ok(&["simulate", "--n-t", "80", "--grid", "5", "--out", s(&sim)]);
    let data = sim.join("replicate_000.csv");
    let before = fs::read(&data).unwrap();
    let fit = tmp.path().join("fit");
    let mut args = vec!["fit", "--data", s(&data), "--out", s(&fit), "--k", "3", "--ridge", "1e-6"];
    args.extend_from_slice(QUICK_FIT);
    ok(&args);
    assert_eq!(fs::read(&data).unwrap(), before, "input was modified");

    let model = tvmix::data::load_model::<f64>(fit.join("model.json")).unwrap();
    assert_eq!(model.k(), 3);
    let resaved = tmp.path().join("again.json");
    tvmix::data::save_model(&model, &resaved).unwrap();
    assert_eq!(fs::read(&resaved).unwrap(), fs::read(fit.join("model.json")).unwrap());

    let m = manifest(&fit);
    assert_eq!(m["config"]["args"]["k"], 3);
    assert_eq!(m["config"]["fit"]["ridge"]["uniform"], 1e-6);
    assert_eq!(m["config"]["fit"]["outer_rounds"], 5);
    let report: Value = serde_json::from_str(&fs::read_to_string(fit.join("fit_report.json")).unwrap()).unwrap();
    let trace = report["component_groups"][0]["objective_trace"].as_array().unwrap();
    assert!(!trace.is_empty());
    let (_, rows) = table(&fit.join("stage_one_weights.csv"));
    for row in rows {
        assert!((row[1..].iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn outer_rounds_flag_is_echoed() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    ok(&["simulate", "--n-t", "40", "--grid", "3", "--out", s(&sim)]);
    let fit = tmp.path().join("fit");
    let data = sim.join("replicate_000.csv");
    ok(&[
        "fit", "--data", s(&data), "--k", "3", "--ridge", "1e-6", "--outer-rounds", "50", "--adam-steps", "5",
        "--kmeans-restarts", "2", "--epochs", "5", "--hidden", "4", "--out", s(&fit),
    ]);
    let m = manifest(&fit);
    assert_eq!(m["config"]["args"]["k"], 3);
    assert_eq!(m["config"]["args"]["stage_one"]["ridge"][0], 1e-6);
    assert_eq!(m["config"]["args"]["stage_one"]["outer_rounds"], 50);
}

#[test]
fn shared_components_give_one_model_per_subject() {
    let tmp = TempDir::new().unwrap();
    let mut text = String::from("subject,t,x1\n");
    for (subject, shift) in [("alice", 0.0), ("bob", 3.0)] {
        for t in 0..4 {
            for i in 0..40 {
                let x = if i % 2 == 0 { -4.0 } else { 4.0 } + shift * (t as f64 / 3.0) + 0.05 * (i as f64 - 20.0);
                text.push_str(&format!("{subject},{t},{x}\n"));
            }
        }
    }
    let data = tmp.path().join("panel.csv");
    fs::write(&data, text).unwrap();
    let fit = tmp.path().join("fit");
    let mut args = vec!["fit", "--data", s(&data), "--k", "2", "--share-components", "--out", s(&fit)];
    args.extend_from_slice(QUICK_FIT);
    ok(&args);
    let a = tvmix::data::load_model::<f64>(fit.join("model_0.json")).unwrap();
    let b = tvmix::data::load_model::<f64>(fit.join("model_1.json")).unwrap();
    assert_eq!(a.components(), b.components());
    let report: Value = serde_json::from_str(&fs::read_to_string(fit.join("fit_report.json")).unwrap()).unwrap();
    assert_eq!(report["subjects"][1]["subject"], "bob");
    assert_eq!(report["component_groups"].as_array().unwrap().len(), 1);

    let separate = tmp.path().join("separate");
    let mut args = vec!["fit", "--data", s(&data), "--k", "2", "--out", s(&separate)];
    args.extend_from_slice(QUICK_FIT);
    ok(&args);
    let report: Value = serde_json::from_str(&fs::read_to_string(separate.join("fit_report.json")).unwrap()).unwrap();
    assert_eq!(report["component_groups"].as_array().unwrap().len(), 2);
}

#[test]
fn predict_weights_and_density_grid() {
    let tmp = TempDir::new().unwrap();
    let (_, model) = fitted(&tmp);
    let out = tmp.path().join("pred");
    ok(&["predict", "--model", s(&model), "--t-grid", "101", "--density-points", "2001", "--out", s(&out)]);
    let (head, rows) = table(&out.join("weights.csv"));
    assert_eq!(head, ["t", "alpha1", "alpha2", "alpha3"]);
    assert_eq!(rows.len(), 101);
    for row in &rows {
        assert!((row[1..].iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(row[1..].iter().all(|&w| w >= 0.0));
    }
    let (_, dens) = table(&out.join("density.csv"));
    for chunk in dens.chunks(2001) {
        let integral: f64 = chunk.windows(2).map(|w| 0.5 * (w[0][2] + w[1][2]) * (w[1][1] - w[0][1])).sum();
        assert!((integral - 1.0).abs() < 1e-4, "t = {} integral {integral}", chunk[0][0]);
    }
}

#[test]
fn predict_outside_unit_interval_fails_with_usage_code() {
    let tmp = TempDir::new().unwrap();
    let (_, model) = fitted(&tmp);
    let out = tvmix(&["predict", "--model", s(&model), "--times", "0.5,1.5", "--out", s(&tmp.path().join("p"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("outside [0, 1]"));
    let out = tvmix(&["predict", "--model", s(&model), "--times", "-0.1", "--out", s(&tmp.path().join("p"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bootstrap_bands_are_ordered_echoed_and_deterministic() {
    let tmp = TempDir::new().unwrap();
    let (data, model) = fitted(&tmp);
    let run = |name: &str| {
        let out = tmp.path().join(name);
        ok(&[
            "bootstrap", "--data", s(&data), "--model", s(&model), "--times", "0,0.4,1", "--b", "60", "--level", "0.1",
            "--grid-points", "51", "--seed", "9", "--out", s(&out),
        ]);
        out
    };
    let a = run("a");
    let b = run("b");
    for j in 0..3 {
        let name = format!("bands_{j:02}.csv");
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
        let (head, rows) = table(&a.join(&name));
        assert_eq!(head, ["x", "point", "lower", "upper"]);
        assert!(rows.iter().all(|r| r[2] <= r[3]));
    }
    let m = manifest(&a);
    assert_eq!(m["config"]["args"]["b"], 60);
    assert_eq!(m["config"]["args"]["level"], 0.1);

    let bad = tvmix(&["bootstrap", "--data", s(&data), "--model", s(&model), "--times", "0.5", "--b", "60", "--out", s(&tmp.path().join("c"))]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn evaluate_density_and_rate() {
    let tmp = TempDir::new().unwrap();
    let (data, model) = fitted(&tmp);
    let out = tmp.path().join("ev");
    ok(&["evaluate", "density", "--model", s(&model), "--data", s(&data), "--out", s(&out)]);
    let (head, rows) = table(&out.join("density_error.csv"));
    assert_eq!(head, ["t", "l2_model", "l1_model", "l2_kde", "l1_kde"]);
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().flatten().all(|v| v.is_finite() && *v >= 0.0));

    let rate = tmp.path().join("rate");
    ok(&[
        "evaluate", "rate", "--regime", "regular", "--sizes", "20,40", "--replicates", "2", "--grid", "3",
        "--outer-rounds", "2", "--adam-steps", "5", "--kmeans-restarts", "2", "--out", s(&rate),
    ]);
    let mut r = csv::Reader::from_path(rate.join("rate.csv")).unwrap();
    assert_eq!(r.records().count(), 4);
    let report: Value = serde_json::from_str(&fs::read_to_string(rate.join("rate.json")).unwrap()).unwrap();
    assert!(report[0]["report"]["slope"].is_number());
}

#[test]
fn export_tables_for_several_models() {
    let tmp = TempDir::new().unwrap();
    let (_, model) = fitted(&tmp);
    let out = tmp.path().join("ex");
    ok(&["export", "--model", s(&model), s(&model), "--t-grid", "11", "--out", s(&out)]);
    let (head, comps) = table(&out.join("components.csv"));
    assert_eq!(head, ["model", "component", "m1", "c1_1"]);
    assert_eq!(comps.len(), 6);
    let (_, traj) = table(&out.join("trajectories.csv"));
    assert_eq!(traj.len(), 22);
    for row in &traj {
        assert!((row[2..].iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    let (_, centered) = table(&out.join("centered_quantiles.csv"));
    assert_eq!(centered.len(), 5 * 11);
    assert!(centered.iter().filter(|r| r[1] == 0.0).all(|r| r[2..].iter().all(|&z| z == 0.0)));
}

#[test]
fn error_categories_map_to_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let missing = tvmix(&["fit", "--data", s(&tmp.path().join("none.csv")), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(missing.status.code(), Some(3));

    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "subject,t,x1\na,0,1\na,0,oops\na,1,2\n").unwrap();
    let out = tvmix(&["fit", "--data", s(&bad), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let model = tmp.path().join("model.json");
    fs::write(&model, "{\"schema_version\": 99}").unwrap();
    let out = tvmix(&["predict", "--model", s(&model), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));

    assert_eq!(tvmix(&["fit", "--k"]).status.code(), Some(2));
    assert_eq!(tvmix(&["frobnicate"]).status.code(), Some(2));
    let out = tvmix(&["simulate", "--grid", "1", "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}
