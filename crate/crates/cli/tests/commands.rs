use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn framecond(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_framecond"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn gen(dir: &TempDir, m: usize, big_m: usize, seed: u64) -> PathBuf {
    let out = dir.path().join(format!("phi_{m}x{big_m}_{seed}.mat"));
    let o = framecond(&[
        "gen",
        "--m",
        &m.to_string(),
        "--M",
        &big_m.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    out
}

fn mercedes_benz_file(dir: &TempDir) -> PathBuf {
    let s = 3f64.sqrt() / 2.0;
    let p = dir.path().join("mb.mat");
    std::fs::write(&p, format!("2 3\n1 -0.5 -0.5\n0 {s:.17e} {:.17e}\n", -s)).unwrap();
    p
}

#[test]
fn generated_frame_is_reproducible_and_analyzable() {
    let dir = TempDir::new().unwrap();
    let a = gen(&dir, 6, 12, 7);
    let b = dir.path().join("again.mat");
    framecond(&[
        "gen",
        "--m",
        "6",
        "--M",
        "12",
        "--seed",
        "7",
        "--out",
        path_str(&b),
    ]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let report = dir.path().join("a.json");
    let o = framecond(&["analyze", path_str(&a), "--report", path_str(&report)]);
    assert_eq!(o.status.code(), Some(0));
    let r = read_json(&report);
    let mu = r["result"]["coherence"].as_f64().unwrap();
    let wb = r["result"]["welch_bound"].as_f64().unwrap();
    assert!(mu >= wb);
    assert_eq!(r["frame_stats"]["rows"], 6);
    assert_eq!(r["config"]["command"], "analyze");
}

#[test]
fn precondition_report_and_unit_diagonal() {
    let dir = TempDir::new().unwrap();
    let phi = gen(&dir, 4, 8, 3);
    let g = dir.path().join("g.mat");
    let report = dir.path().join("r.json");
    let o = framecond(&[
        "precondition",
        path_str(&phi),
        "--out",
        path_str(&g),
        "--report",
        path_str(&report),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r = read_json(&report);
    for key in [
        "q",
        "coherence_before",
        "coherence_after",
        "welch_bound",
        "kappa",
        "d_plus",
        "d_minus",
    ] {
        assert!(!r["result"][key].is_null(), "missing {key}");
    }
    assert_eq!(r["solver"]["status"], "Optimal");
    let q = r["result"]["q"].as_f64().unwrap();
    let after = r["result"]["coherence_after"].as_f64().unwrap();
    assert!((q - after).abs() < 1e-5);

    let parse = |p: &Path| {
        let text = std::fs::read_to_string(p).unwrap();
        let mut lines = text.lines();
        let dims: Vec<usize> = lines
            .next()
            .unwrap()
            .split_whitespace()
            .map(|t| t.parse().unwrap())
            .collect();
        let vals: Vec<f64> = lines
            .flat_map(|l| {
                l.split_whitespace()
                    .map(|t| t.parse::<f64>().unwrap())
                    .collect::<Vec<_>>()
            })
            .collect();
        nalgebra::DMatrix::from_row_slice(dims[0], dims[1], &vals)
    };
    let gphi = parse(&g) * parse(&phi);
    for c in gphi.column_iter() {
        assert!((c.norm_squared() - 1.0).abs() < 1e-6);
    }

    // The same report on stdout.
    let o = framecond(&["precondition", path_str(&phi)]);
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((r["result"]["q"].as_f64().unwrap() - q).abs() < 1e-12);
}

#[test]
fn diag_lp_on_sign_pattern() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("sp.mat");
    std::fs::write(&p, "3 4\n1 1 1 1\n1 -1 1 -1\n1 1 -1 -1\n").unwrap();
    let o = framecond(&["diag-lp", path_str(&p)]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((r["result"]["q"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-5);
}

#[test]
fn certify_mercedes_benz() {
    let dir = TempDir::new().unwrap();
    let p = mercedes_benz_file(&dir);
    let o = framecond(&["certify", path_str(&p)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no strict improvement"));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["result"]["verdict"], "feasible");
}

#[test]
fn tightened_frame_is_tight() {
    let dir = TempDir::new().unwrap();
    let phi = gen(&dir, 4, 9, 1);
    let tight = dir.path().join("t.mat");
    let o = framecond(&["tighten", path_str(&phi), "--out", path_str(&tight)]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let o = framecond(&["analyze", path_str(&tight)]);
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r["frame_stats"]["tight_defect"].as_f64().unwrap() <= 1e-7);
}

#[test]
fn recover_planted_signal() {
    let dir = TempDir::new().unwrap();
    let phi = gen(&dir, 10, 20, 2);
    for decoder in ["omp", "bp"] {
        let o = framecond(&[
            "recover",
            path_str(&phi),
            "--k",
            "1",
            "--seed",
            "4",
            "--decoder",
            decoder,
        ]);
        assert_eq!(o.status.code(), Some(0));
        let r: Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(r["result"]["success"], true, "{decoder}");
        assert_eq!(r["result"]["support"], r["result"]["planted_support"]);
    }
}

#[test]
fn phase_writes_sidecars() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("p.csv");
    let report = dir.path().join("p.json");
    let o = framecond(&[
        "phase",
        "--M",
        "12",
        "--m",
        "4,6",
        "--trials",
        "4",
        "--pipeline",
        "gphi",
        "--out",
        path_str(&csv),
        "--report",
        path_str(&report),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r = read_json(&report);
    let curve = PathBuf::from(r["result"]["curve_csv"].as_str().unwrap());
    assert_eq!(curve, dir.path().join("p_curve.csv"));
    assert!(std::fs::read_to_string(&curve)
        .unwrap()
        .starts_with("m,curve\n"));
    assert!(dir.path().join("p.gp").exists());
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(rows.lines().next(), Some("m,s,success_rate"));
    assert_eq!(rows.lines().count(), 1 + 4 + 6);
}

#[test]
fn sweep_arrays_line_up() {
    let o = framecond(&[
        "sweep", "--m", "4", "--M", "8", "--seed", "1", "--t1-max", "3",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    let grid = r["result"]["t1_grid"].as_array().unwrap();
    assert_eq!(grid.len(), 5);
    assert_eq!(r["result"]["q"].as_array().unwrap().len(), grid.len());
    assert_eq!(r["result"]["kappa"].as_array().unwrap().len(), grid.len());
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    assert_eq!(framecond(&["bogus"]).status.code(), Some(2));
    assert_eq!(framecond(&["gen", "--m", "x"]).status.code(), Some(2));
    assert_eq!(framecond(&["--help"]).status.code(), Some(0));

    let bad = dir.path().join("bad.mat");
    std::fs::write(&bad, "2 3\n1 2 3\n1 2\n").unwrap();
    let o = framecond(&["analyze", path_str(&bad)]);
    assert_ne!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    let phi = gen(&dir, 4, 8, 3);
    let o = framecond(&["precondition", path_str(&phi), "--max-iter", "1"]);
    assert_eq!(o.status.code(), Some(1));
    let o = framecond(&[
        "precondition",
        path_str(&phi),
        "--max-iter",
        "1",
        "--allow-inexact",
    ]);
    assert_eq!(o.status.code(), Some(0));
}
