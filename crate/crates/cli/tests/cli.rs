//! End-to-end runs of the `refqueue` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const PURE_033: &str = "\
[config]
seed = 3

[session]
lambda = 1472.4
train_size = 17
packet_size_bytes = 1500
rate_min_bps = 0.5e9
rate_max_bps = 1.5e9
";

fn refqueue(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_refqueue")).args(args).output().expect("binary runs")
}

fn scenario(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

/// Quantile of a gridded cdf whose first row is the atom at zero: zero up to
/// the atom, otherwise linear interpolation into the first point reaching `p`.
fn quantile_from_csv(rows: &[Vec<String>], p: f64) -> f64 {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap())).collect();
    if p <= pts[0].1 {
        return 0.0;
    }
    // Skip the t = 0 row; the continuous part starts at the grid.
    let grid = &pts[1..];
    let j = grid.iter().position(|&(_, c)| c >= p).expect("mass reaches p");
    if j == 0 {
        return grid[0].0;
    }
    let ((t0, c0), (t1, c1)) = (grid[j - 1], grid[j]);
    t0 + (p - c0) / (c1 - c0) * (t1 - t0)
}

#[test]
fn analyze_writes_every_file_and_round_trips_quantiles() {
    let dir = TempDir::new().unwrap();
    let sc = scenario(dir.path(), "pure.ini", PURE_033);
    let out = dir.path().join("out");
    let o = refqueue(&["analyze", "--scenario", s(&sc), "--out", s(&out), "--percentiles", "0.5,0.9,0.95,0.99"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "service_pdf.csv",
        "occupancy.csv",
        "wait_pdf.csv",
        "wait_cdf.csv",
        "report.txt",
        "report.csv",
        "metadata.json",
        "mc_components.csv",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let (header, rows) = read_csv(&out.join("report.csv"));
    let (_, cdf) = read_csv(&out.join("wait_cdf.csv"));
    assert_eq!(cdf[0][0], "0.0");
    for (label, p) in [("wait_p50_s", 0.5), ("wait_p90_s", 0.9), ("wait_p95_s", 0.95), ("wait_p99_s", 0.99)] {
        let col = header.iter().position(|h| h == label).unwrap();
        let reported: f64 = rows[0][col].parse().unwrap();
        let recomputed = quantile_from_csv(&cdf, p);
        assert!((recomputed - reported).abs() <= 1e-9 * reported.abs(), "{label}: {recomputed} vs {reported}");
    }
    let i_max = header.iter().position(|h| h == "i_max").unwrap();
    assert_eq!(rows[0][i_max], "3");
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 3);
    assert_eq!(meta["k_steps"], 10_000);
    assert_eq!(meta["wait_grid_steps"], 5000);
    assert!(meta["rng_algorithm"].as_str().unwrap().contains("xoshiro256++"));
    let text = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(text.contains(" ms"));
}

#[test]
fn analyze_is_byte_identical_across_runs_and_flags_override_the_file() {
    let dir = TempDir::new().unwrap();
    let sc = scenario(dir.path(), "pure.ini", PURE_033);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(code(&refqueue(&["analyze", "--scenario", s(&sc), "--out", s(&a)])), 0);
    assert_eq!(code(&refqueue(&["analyze", "--scenario", s(&sc), "--out", s(&b)])), 0);
    assert_eq!(code(&refqueue(&["analyze", "--scenario", s(&sc), "--out", s(&c), "--seed", "4"])), 0);
    for f in ["wait_pdf.csv", "wait_cdf.csv", "report.csv", "occupancy.csv", "metadata.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    assert_ne!(fs::read(a.join("wait_pdf.csv")).unwrap(), fs::read(c.join("wait_pdf.csv")).unwrap());
}

#[test]
fn simulate_is_byte_identical_and_writes_samples() {
    let dir = TempDir::new().unwrap();
    let sc = scenario(dir.path(), "pure.ini", PURE_033);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = refqueue(&["simulate", "--scenario", s(&sc), "--out", s(out), "--arrivals", "1000", "--seed", "7", "--samples"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["sim_summary.csv", "samples.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let (header, rows) = read_csv(&a.join("samples.csv"));
    assert_eq!(
        header,
        ["arrival_time_s", "session_index", "service_time_s", "true_wait_s", "surrogate_wait_s", "n_at_arrival"]
    );
    assert_eq!(rows.len(), 900);
}

#[test]
fn unstable_simulation_warns_and_runs() {
    let dir = TempDir::new().unwrap();
    let sc = scenario(dir.path(), "hot.ini", &PURE_033.replace("lambda = 1472.4", "lambda = 5000"));
    let out = dir.path().join("out");
    let o = refqueue(&["simulate", "--scenario", s(&sc), "--out", s(&out), "--arrivals", "5000"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("WARNING: rho >= 1"));
    assert!(out.join("sim_summary.csv").is_file());
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let run = |text: &str, extra: &[&str]| {
        let sc = scenario(dir.path(), "s.ini", text);
        let mut args = vec!["analyze", "--scenario", s(&sc), "--out", s(&out)];
        args.extend_from_slice(extra);
        refqueue(&args)
    };
    assert_eq!(code(&run("[config]\nseed = 1\n", &[])), 1);
    assert_eq!(code(&run(&PURE_033.replace("train_size", "trains"), &[])), 1);
    assert_eq!(code(&run(PURE_033, &["--mass", "1.5"])), 1);
    assert_eq!(code(&refqueue(&["analyze", "--scenario", "/nonexistent.ini"])), 1);
    assert_eq!(code(&refqueue(&["analyze", "--bogus-flag"])), 1);

    let hot = run(&PURE_033.replace("lambda = 1472.4", "lambda = 4500"), &[]);
    assert_eq!(code(&hot), 2);
    assert!(String::from_utf8_lossy(&hot.stderr).contains("rho = 1.00"));

    let o = run(PURE_033, &["--percentiles", "0.95,0.999"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("increase i_max mass threshold"));
    assert!(out.join("wait_cdf.csv").is_file());
}

#[test]
fn compare_agrees_with_exact_theory_at_low_load_and_flags_a_corrupted_occupancy() {
    let dir = TempDir::new().unwrap();
    let sc = scenario(dir.path(), "pure.ini", PURE_033);
    let (good, bad) = (dir.path().join("good"), dir.path().join("bad"));
    let o = refqueue(&["compare", "--scenario", s(&sc), "--out", s(&good), "--arrivals", "410000"]);
    assert_eq!(code(&o), 0);
    // The surrogate-wait KS row is length-biased and not part of the exact theory.
    let (_, rows) = read_csv(&good.join("comparison.csv"));
    for name in ["tv_occupancy", "mean_true_wait_vs_pk_se", "utilization_vs_rho_se"] {
        let row = rows.iter().find(|r| r[0] == name).unwrap();
        assert_eq!(row[3], "true", "{row:?}");
    }

    let o = refqueue(&[
        "compare", "--scenario", s(&sc), "--out", s(&bad), "--arrivals", "410000", "--corrupt-occupancy", "0.05",
    ]);
    assert_eq!(code(&o), 0);
    let (_, rows) = read_csv(&bad.join("comparison.csv"));
    let tv = rows.iter().find(|r| r[0] == "tv_occupancy").unwrap();
    assert_eq!(tv[3], "false");
    assert!(String::from_utf8_lossy(&o.stdout).contains("overall: FAIL"));
}

#[test]
fn dimension_finds_a_maximum_and_reports_unsatisfiable_limits() {
    let dir = TempDir::new().unwrap();
    let sc = scenario(dir.path(), "pure.ini", PURE_033);
    let out = dir.path().join("dim");
    let base = ["dimension", "--scenario", s(&sc), "--out", s(&out)];

    // Queue-length limits need no Monte Carlo.
    let mut args = base.to_vec();
    args.extend(["--lambda-min", "500", "--lambda-max", "3000", "--lambda-steps", "26", "--queue-limit", "0.95:3"]);
    let o = refqueue(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out.join("dimension.csv"));
    let feasible = header.iter().position(|h| h == "feasible").unwrap();
    let q = header.iter().position(|h| h == "queue_p95").unwrap();
    let last_ok = rows.iter().filter(|r| r[feasible] == "true").last().unwrap();
    assert!(last_ok[q].parse::<usize>().unwrap() <= 3);
    assert_eq!(rows.last().unwrap()[feasible], "false");

    let mut args = base.to_vec();
    args.extend(["--lambda-min", "1000", "--lambda-max", "2000", "--wait-limit", "0.95:0"]);
    let o = refqueue(&args);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nearest miss"));

    let mut args = base.to_vec();
    args.extend(["--lambda-min", "1000", "--lambda-max", "5000", "--queue-limit", "0.95:3"]);
    assert_eq!(code(&refqueue(&args)), 2);

    let mut args = base.to_vec();
    args.extend(["--lambda-min", "1000", "--lambda-max", "2000"]);
    assert_eq!(code(&refqueue(&args)), 1);
}
