use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const FAST: [&str; 4] = ["--paths", "1000", "--steps", "512"];

fn run(cache: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pivotfda"))
        .args(args)
        .env("PIVOTFDA_CACHE_DIR", cache)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn generate(cache: &Path, dir: &Path, slope: &str, n: &str, seed: &str) {
    let d = dir.to_str().unwrap();
    let out = run(cache, &["generate", "--slope", slope, "--n", n, "--seed", seed, "--out-dir", d]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn p(dir: &Path, f: &str) -> String {
    dir.join(f).to_str().unwrap().to_owned()
}

#[test]
fn quantiles_reproduce_the_table_and_use_the_cache() {
    let cache = tempfile::tempdir().unwrap();
    let v = json(&run(cache.path(), &["quantiles", "--nu0", "0.5", "--Q", "25", "--paths", "10000"]));
    let entries = v["result"]["entries"].as_array().unwrap();
    let q95 = entries.iter().find(|e| e[0] == 0.95).unwrap()[1].as_f64().unwrap();
    assert!((10.9..=12.2).contains(&q95), "{q95}");
    assert_eq!(v["provenance"]["pivotal"]["seed"], 20_190_601);
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(std::fs::read_dir(cache.path()).unwrap().count(), 1);
}

#[test]
fn huge_threshold_is_not_rejected_and_output_is_deterministic() {
    let cache = tempfile::tempdir().unwrap();
    let data = tempfile::tempdir().unwrap();
    generate(cache.path(), data.path(), "s2", "120", "5");
    let (x, y) = (p(data.path(), "x.csv"), p(data.path(), "y.csv"));
    let mut args = vec!["test-scalar", "--x", &x, "--y", &y, "--delta", "1000"];
    args.extend(FAST);
    let a = run(cache.path(), &args);
    let b = run(cache.path(), &args);
    let v = json(&a);
    assert_eq!(v["result"]["report"]["reject"], false);
    assert_eq!(v["command"], "test-scalar");
    assert!(v["result"]["report"]["lambdas"][0].as_f64().unwrap() > 0.0);
    assert_eq!(a.stdout, b.stdout);

    let out = p(data.path(), "report.json");
    let mut with_file = args.clone();
    with_file.extend(["--output", &out]);
    assert!(run(cache.path(), &with_file).status.success());
    assert_eq!(std::fs::read(&out).unwrap(), a.stdout);

    let mut text = args.clone();
    text.extend(["--format", "text"]);
    let t = run(cache.path(), &text);
    assert!(String::from_utf8_lossy(&t.stdout).contains("reject"));
}

#[test]
fn functional_delta_sweep_is_monotone() {
    let cache = tempfile::tempdir().unwrap();
    let data = tempfile::tempdir().unwrap();
    generate(cache.path(), data.path(), "f2", "100", "6");
    let (x, y) = (p(data.path(), "x.csv"), p(data.path(), "y.csv"));
    let mut args = vec!["test-functional", "--x", &x, "--y", &y, "--delta-sweep", "0.19,0.33,0.42,5.0", "--r", "8"];
    args.extend(FAST);
    let v = json(&run(cache.path(), &args));
    let sweep = v["result"]["sweep"].as_array().unwrap();
    assert_eq!(sweep.len(), 4);
    let rejects: Vec<bool> = sweep.iter().map(|s| s["reject"].as_bool().unwrap()).collect();
    assert!(rejects.windows(2).all(|w| w[0] || !w[1]), "{rejects:?}");
    assert!(!rejects[3]);
    assert_eq!(v["result"]["report"]["delta"], 0.19);
}

#[test]
fn two_sample_location_and_ci_commands() {
    let cache = tempfile::tempdir().unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate(cache.path(), a.path(), "s1", "80", "7");
    generate(cache.path(), b.path(), "s1", "80", "8");
    let (x1, y1, x2, y2) = (p(a.path(), "x.csv"), p(a.path(), "y.csv"), p(b.path(), "x.csv"), p(b.path(), "y.csv"));
    let mut args = vec!["test-two-sample", "--x1", &x1, "--y1", &y1, "--x2", &x2, "--y2", &y2, "--delta", "0.5"];
    args.extend(FAST);
    let v = json(&run(cache.path(), &args));
    assert_eq!(v["result"]["report"]["lambdas"].as_array().unwrap().len(), 2);
    assert_eq!(v["inputs"].as_array().unwrap().len(), 4);

    // Reference slope: a single zero curve, so the location statistic equals
    // the one-sample one.
    let star = p(a.path(), "star.csv");
    std::fs::write(&star, vec!["0"; 101].join(",") + "\n").unwrap();
    let mut loc = vec!["test-location", "--x", &x1, "--y", &y1, "--beta-star", &star, "--delta", "0.5"];
    loc.extend(FAST);
    let l = json(&run(cache.path(), &loc));
    let mut one = vec!["test-scalar", "--x", &x1, "--y", &y1, "--delta", "0.5"];
    one.extend(FAST);
    let o = json(&run(cache.path(), &one));
    let (tl, to) = (
        l["result"]["report"]["statistics"]["t"].as_f64().unwrap(),
        o["result"]["report"]["statistics"]["t"].as_f64().unwrap(),
    );
    assert!((tl - to).abs() <= 1e-8 * (1.0 + to));

    let mut ci = vec!["ci", "--x", &x1, "--y", &y1, "--alpha", "0.1"];
    ci.extend(FAST);
    let c = json(&run(cache.path(), &ci));
    let one_u = c["result"]["one_sided"]["upper"].as_f64().unwrap();
    let two = &c["result"]["two_sided"];
    assert!(two["upper"].as_f64().unwrap() >= one_u);
    assert!(two["lower"].as_f64().unwrap() >= 0.0);
}

#[test]
fn simulate_writes_results() {
    let cache = tempfile::tempdir().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let csv = p(dir.path(), "curve.csv");
    let mut args = vec![
        "simulate", "--slope", "s1", "--n", "40", "--runs", "50", "--deltas", "0.5,1,1e6", "--r", "5", "--Q", "5", "--csv", &csv,
    ];
    args.extend(FAST);
    let v = json(&run(cache.path(), &args));
    let p_rej = v["result"]["p_reject"].as_array().unwrap();
    assert_eq!(p_rej.len(), 3);
    assert_eq!(p_rej[2], 0.0);
    assert_eq!(v["provenance"]["seed"], 1);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 4);

    let mut cov = vec!["simulate", "--slope", "s2", "--n", "40", "--runs", "50", "--experiment", "coverage", "--r", "5", "--Q", "5"];
    cov.extend(FAST);
    let c = json(&run(cache.path(), &cov));
    assert!(c["result"]["one_sided"].as_f64().unwrap() > 0.5);
}

#[test]
fn usage_errors_exit_2() {
    let cache = tempfile::tempdir().unwrap();
    let data = tempfile::tempdir().unwrap();
    generate(cache.path(), data.path(), "s2", "40", "9");
    let (x, y) = (p(data.path(), "x.csv"), p(data.path(), "y.csv"));
    let cases: Vec<Vec<&str>> = vec![
        vec!["test-scalar", "--x", &x, "--y", &y, "--delta", "1", "--alpha", "1.5"],
        vec!["test-scalar", "--x", &x, "--y", &y],
        vec!["test-scalar", "--x", &x, "--y", &y, "--delta", "-1"],
        vec!["test-scalar", "--x", &x, "--y", &y, "--delta", "1", "--lambda", "fast"],
        vec!["test-scalar", "--x", &x, "--y", &y, "--delta", "1", "--nu0", "1.0"],
        vec!["test-scalar", "--x", &x, "--y", &y, "--delta", "1", "--paths", "10"],
        vec!["test-scalar", "--x", &x, "--y", &y, "--delta", "1", "--r", "100"],
        vec!["test-scalar", "--x", &x, "--y", &y, "--delta", "1", "--grid", "3"],
        vec!["test-scalar", "--bogus"],
        vec!["quantiles", "--levels", "1.2"],
        vec!["simulate", "--slope", "f1", "--experiment", "two-sample", "--runs", "50"],
        vec!["simulate", "--slope", "s1", "--runs", "5"],
        vec!["generate", "--slope", "s9", "--out-dir", "/tmp"],
    ];
    for args in cases {
        let out = run(cache.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    // Validation happens before any simulation.
    assert_eq!(std::fs::read_dir(cache.path()).unwrap().count(), 0);
}

#[test]
fn data_errors_exit_3_and_name_the_input() {
    let cache = tempfile::tempdir().unwrap();
    let data = tempfile::tempdir().unwrap();
    generate(cache.path(), data.path(), "s2", "40", "10");
    let (x, y) = (p(data.path(), "x.csv"), p(data.path(), "y.csv"));
    let missing = p(data.path(), "nope.csv");
    let short = p(data.path(), "short.csv");
    std::fs::write(&short, "1.0\n2.0\n").unwrap();
    let bad = p(data.path(), "bad.csv");
    std::fs::write(&bad, "1.0,abc,3.0\n").unwrap();
    let cases: Vec<(Vec<&str>, &str)> = vec![
        (vec!["test-scalar", "--x", &missing, "--y", &y, "--delta", "1"], "nope.csv"),
        (vec!["test-scalar", "--x", &x, "--y", &short, "--delta", "1"], "short.csv"),
        (vec!["test-scalar", "--x", &bad, "--y", &y, "--delta", "1"], "bad.csv"),
        (vec!["test-scalar", "--x", &x, "--y", &y, "--delta", "1", "--grid", "51"], "x.csv"),
        (vec!["test-functional", "--x", &x, "--y", &y, "--delta", "1"], "y.csv"),
    ];
    for (mut args, name) in cases {
        args.extend(FAST);
        let out = run(cache.path(), &args);
        let err = String::from_utf8_lossy(&out.stderr);
        assert_eq!(out.status.code(), Some(3), "{args:?}: {err}");
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn numerical_failures_exit_4() {
    let cache = tempfile::tempdir().unwrap();
    let data = tempfile::tempdir().unwrap();
    // Every curve is a multiple of one function: the covariance has rank one.
    let grid: Vec<f64> = (0..101).map(|i| i as f64 / 100.0).collect();
    let mut x = String::new();
    let mut y = String::new();
    for i in 0..40 {
        let a = (i as f64 * 0.37).sin();
        let row: Vec<String> = grid.iter().map(|s| format!("{}", a * (1.0 + s))).collect();
        x.push_str(&(row.join(",") + "\n"));
        y.push_str(&format!("{a}\n"));
    }
    let (xp, yp) = (p(data.path(), "x.csv"), p(data.path(), "y.csv"));
    std::fs::write(&xp, x).unwrap();
    std::fs::write(&yp, y).unwrap();
    let mut args = vec!["test-scalar", "--x", &xp, "--y", &yp, "--delta", "1", "--r", "3"];
    args.extend(FAST);
    let out = run(cache.path(), &args);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn generate_writes_functional_data() {
    let cache = tempfile::tempdir().unwrap();
    let data = tempfile::tempdir().unwrap();
    generate(cache.path(), data.path(), "f1", "25", "11");
    let y = std::fs::read_to_string(data.path().join("y.csv")).unwrap();
    assert_eq!(y.lines().filter(|l| !l.starts_with('s')).count(), 25);
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(data.path().join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["grid_points"], 101);
}
