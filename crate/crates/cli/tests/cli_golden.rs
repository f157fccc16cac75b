use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hadamard_prox::descriptor::{PointSpec, TreeSpec};
use hadamard_prox::geometry::Space;
use serde_json::Value;

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn proxcat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_proxcat")).args(args).output().expect("binary runs")
}

fn run(config: &str, out: &Path, extra: &[&str]) -> Output {
    let cfg = golden(config);
    let mut args = vec!["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    proxcat(&args)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn quadratic_config_passes_with_closed_form_values() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("quadratic.json", dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ppa = csv_rows(&dir.path().join("ppa_trace.csv"));
    assert_eq!(ppa[0].join(","), "n,lambda,f_value,step_distance,dist_to_minimizer,fejer_residual,rate_bound");
    let last = &ppa[11];
    assert_eq!(last[0], "10");
    // x_n = 2^-n, f = x^2 / 2
    let f10: f64 = last[2].parse().unwrap();
    assert!((f10 - 0.5 * 4f64.powi(-10)).abs() <= 1e-12);
    let flow = csv_rows(&dir.path().join("flow_trace.csv"));
    assert_eq!(flow[0].join(","), "lambda,f_value,step_distance,dist_to_minimizer,fejer_residual,rate_bound");
    for row in &flow[2..] {
        let lambda: f64 = row[0].parse().unwrap();
        let dist: f64 = row[3].parse().unwrap();
        assert!((dist - (-lambda).exp()).abs() <= 1e-6, "lambda {lambda}: {dist}");
    }
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["exit_code"], 0);
    assert_eq!(manifest["verdicts"]["ppa.fejer"], "pass");
    assert_eq!(manifest["verdicts"]["flow.flow_fejer"], "pass");
    let outputs: Vec<&str> = manifest["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(outputs, ["ppa_trace.csv", "flow_trace.csv", "report.json", "manifest.json"]);
    for name in outputs {
        assert!(dir.path().join(name).exists());
    }
}

#[test]
fn negative_step_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("negative_lambda.json", dir.path(), &[]);
    assert_eq!(code(&o), 1);
    let msg = stderr(&o);
    assert!(msg.contains("ppa") && msg.contains("validation") && msg.contains("lambda"), "{msg}");
}

#[test]
fn wrong_minimizer_fails_fejer() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("wrong_minimizer.json", dir.path(), &[]);
    assert_eq!(code(&o), 2);
    // iterates move from 1 toward 0, away from the declared 5
    assert!(stderr(&o).contains("ppa.fejer: Fail, worst residual 5e-1 at index 1"), "{}", stderr(&o));
    let manifest = json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["verdicts"]["ppa.fejer"], "fail");
    assert_eq!(manifest["exit_code"], 2);
}

#[test]
fn solver_errors_name_module_and_step() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("disjoint_constraints.json", dir.path(), &[]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("ppa: step 1: infeasible"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = |text: &str| {
        let path = dir.path().join("bad.json");
        std::fs::write(&path, text).unwrap();
        proxcat(&["run", "--config", path.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()])
    };
    let quadratic = std::fs::read_to_string(golden("quadratic.json")).unwrap();
    for text in [
        quadratic.replacen("\"seed\": 1", "\"seed\": 1, \"sed\": 2", 1),
        quadratic.replacen(",\n  \"seed\": 1", "", 1),
        quadratic.replacen("\"euclidean\", \"dimension\": 1", "\"tree_file\", \"path\": \"missing.json\"", 1),
        "{".to_string(),
    ] {
        let o = bad(&text);
        assert_eq!(code(&o), 1, "{text}");
    }
    assert_eq!(code(&proxcat(&["run"])), 1);
    assert_eq!(code(&proxcat(&["frobnicate"])), 1);
    assert_eq!(code(&proxcat(&["--help"])), 0);
}

#[test]
fn golden_runs_are_byte_identical() {
    for config in ["quadratic.json", "tree_median.json", "hyperbolic_harmonic.json", "wrong_minimizer.json"] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ca = code(&run(config, a.path(), &[]));
        let cb = code(&run(config, b.path(), &["--sequential"]));
        assert_eq!(ca, cb);
        for name in ["ppa_trace.csv", "flow_trace.csv", "report.json", "manifest.json"] {
            let (pa, pb) = (a.path().join(name), b.path().join(name));
            assert_eq!(pa.exists(), pb.exists());
            if pa.exists() {
                assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap(), "{config}/{name}");
            }
        }
    }
}

#[test]
fn hash_is_stable_under_reordering_and_tracks_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let value = json(&golden("quadratic.json"));
    let mut reversed = serde_json::Map::new();
    for (k, v) in value.as_object().unwrap().iter().rev() {
        reversed.insert(k.clone(), v.clone());
    }
    let path = dir.path().join("reordered.json");
    std::fs::write(&path, serde_json::to_string(&Value::Object(reversed)).unwrap()).unwrap();
    let hash = |o: &Path| json(&o.join("manifest.json"))["config_hash"].clone();

    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(code(&run("quadratic.json", &a, &[])), 0);
    assert_eq!(
        code(&proxcat(&["run", "--config", path.to_str().unwrap(), "--out", b.to_str().unwrap()])),
        0
    );
    assert_eq!(hash(&a), hash(&b));
    assert_eq!(code(&run("quadratic.json", &c, &["--budget", "4", "--seed", "9"])), 0);
    assert_ne!(hash(&a), hash(&c));
    let manifest = json(&c.join("manifest.json"));
    assert_eq!(manifest["seed"], 9);
    assert_eq!(json(&c.join("report.json"))["ppa"]["iterations"], 4);
}

#[test]
fn spd_and_tree_configs_reach_their_minimizers() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("spd_mean.json", &dir.path().join("spd"), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = json(&dir.path().join("spd/report.json"));
    let space = Space::spd(2).unwrap();
    let two = PointSpec::Matrix(vec![vec![2.0, 0.0], vec![0.0, 2.0]]).build(&space).unwrap();
    let point = |v: &Value| serde_json::from_value::<PointSpec>(v.clone()).unwrap().build(&space).unwrap();
    assert!(space.distance(&point(&report["ppa"]["final_point"]), &two).unwrap() <= 1e-6);
    let flow_points = report["flow"]["points"].as_array().unwrap();
    assert!(space.distance(&point(flow_points.last().unwrap()), &two).unwrap() <= 1e-3);

    let o = run("tree_median.json", &dir.path().join("tree"), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = json(&dir.path().join("tree/report.json"));
    assert_eq!(report["ppa"]["final_point"], serde_json::json!({"vertex": "o"}));
}

fn mean_point(out: &Path) -> Value {
    json(&out.join("mean.json"))["mean"].clone()
}

#[test]
fn mean_examples() {
    let dir = tempfile::tempdir().unwrap();
    let out = |n: &str| dir.path().join(n);
    let g = |n: &str| golden(n).to_str().unwrap().to_string();

    let o = proxcat(&["mean", "--points", &g("pts_plane.json"), "--space", "euclidean", "--out", out("plane").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: Vec<f64> = serde_json::from_value(mean_point(&out("plane"))).unwrap();
    assert!((m[0] - 1.0).abs() <= 1e-8 && m[1].abs() <= 1e-8, "{m:?}");

    let o = proxcat(&["mean", "--points", &g("pts_spd.json"), "--space", "spd", "--out", out("spd").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let space = Space::spd(2).unwrap();
    let m = serde_json::from_value::<PointSpec>(mean_point(&out("spd"))).unwrap().build(&space).unwrap();
    let two = PointSpec::Matrix(vec![vec![2.0, 0.0], vec![0.0, 2.0]]).build(&space).unwrap();
    assert!(space.distance(&m, &two).unwrap() <= 1e-6);

    let o = proxcat(&[
        "mean", "--points", &g("pts_star.json"), "--space", "tree", "--tree", &g("star.json"), "--p", "1",
        "--out", out("tree").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(mean_point(&out("tree")), serde_json::json!({"vertex": "o"}));

    // weighted 1-D median: the weight 1/2 at 1 balances the other two
    let o = proxcat(&["mean", "--points", &g("pts_weighted.json"), "--space", "euclidean", "--p", "1", "--out", out("w").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: Vec<f64> = serde_json::from_value(mean_point(&out("w"))).unwrap();
    assert!((m[0] - 1.0).abs() <= 1e-8);

    let o = proxcat(&["mean", "--points", &g("pts_plane.json"), "--space", "euclidean", "--p", "3", "--out", out("x").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn tree_median_matches_grid_oracle() {
    let tree = TreeSpec::load(&golden("star.json")).unwrap().build().unwrap();
    let space = Space::tree(tree);
    let leaves: Vec<_> = ["a", "b", "c"].iter().map(|v| space.vertex(v).unwrap()).collect();
    let cell = 1e-3;
    let mut best = (f64::INFINITY, None);
    for edge in 0..3 {
        for k in 0..=1000 {
            let p = space.locus(edge, k as f64 * cell).unwrap();
            let f: f64 = leaves.iter().map(|l| space.distance(&p, l).unwrap()).sum();
            if f < best.0 {
                best = (f, Some(p));
            }
        }
    }
    let oracle = best.1.unwrap();
    assert!(space.distance(&oracle, &space.vertex("o").unwrap()).unwrap() <= cell);
}

#[test]
fn verify_examples() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e");
    let o = proxcat(&["verify", "--space", "euclidean", "--dimension", "3", "--budget", "1000", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = json(&out.join("verify_report.json"));
    let check = |r: &Value, name: &str| {
        r["checks"].as_array().unwrap().iter().find(|c| c["name"] == name).cloned().unwrap()
    };
    let flat = check(&report, "cat0_flat");
    assert_eq!(flat["checked"], 1000);
    assert!(flat["worst_residual"].as_f64().unwrap() <= 1e-10);

    let out = dir.path().join("h");
    let o = proxcat(&["verify", "--space", "hyperbolic", "--dimension", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let cat0 = check(&json(&out.join("verify_report.json")), "cat0_inequality");
    // residuals are stored negated: -r <= 1e-8
    assert!(cat0["worst_residual"].as_f64().unwrap() <= 1e-8);

    let nonsym = golden("pts_nonsymmetric.json");
    let o = proxcat(&["verify", "--space", "spd", "--points", nonsym.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("symmetric"), "{}", stderr(&o));

    let star = golden("star.json");
    let o = proxcat(&["verify", "--space", "tree", "--tree", star.to_str().unwrap(), "--budget", "200"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(code(&proxcat(&["verify", "--space", "spd", "--budget", "0", "--dimension", "2"])), 1);
}
