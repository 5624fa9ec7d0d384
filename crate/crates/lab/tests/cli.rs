use std::path::{Path, PathBuf};
use std::process::Command as Proc;

use stairtree_lab::config::{parse, ThetaScanConfig};
use stairtree_lab::experiments::theta_scan;
use stairtree_lab::{run, Backend, Command};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn read(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

/// Data rows of a CSV, after the manifest line and the header.
fn rows(path: &Path) -> (String, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let first = lines.next().unwrap().to_string();
    lines.next();
    (first, lines.map(|l| l.split(',').map(str::to_string).collect()).collect())
}

#[test]
fn boxes_match_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let hash = run(Command::Boxes, &read("boxes_decaying.json"), dir.path(), Backend::Rational, None).unwrap();
    let (first, rows) = rows(&dir.path().join("boxes.csv"));
    assert_eq!(first, format!("# manifest: {hash}"));
    assert_eq!(rows.len(), 200);
    for r in &rows {
        let m: i64 = r[0].parse().unwrap();
        let g = num_integer_gcd(2, m + 2);
        assert_eq!(r[1], format!("{}/{}", 2 / g, (m + 2) / g));
        assert_eq!(r[2] == "true", m >= 198);
    }
}

fn num_integer_gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        num_integer_gcd(b, a % b)
    }
}

#[test]
fn malformed_rational_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = Proc::new(env!("CARGO_BIN_EXE_stairtree"))
        .args(["orbit", "--config"])
        .arg(fixture("bad_rational.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "invalid_config");
    assert!(err["message"].as_str().unwrap().contains("1/0"));
}

#[test]
fn unknown_field_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let text = read("boxes_decaying.json").replacen('{', "{\"extra\": 1,", 1);
    let e = run(Command::Boxes, &text, dir.path(), Backend::Rational, None).unwrap_err();
    assert_eq!(e.exit_code(), 2);
}

// Final row frozen from the first release run.
const HOPF_FINAL_RATIO: f64 = 0.5155500007499925;
const HOPF_FINAL_TOL: f64 = 1e-12;

#[test]
fn hopf_regression() {
    let dir = tempfile::tempdir().unwrap();
    run(Command::Hopf, &read("hopf_ring.json"), dir.path(), Backend::Float64, None).unwrap();
    let (_, rows) = rows(&dir.path().join("hopf.csv"));
    let last = rows.last().unwrap();
    assert_eq!(last[0], "100000");
    let ratio: f64 = last[3].parse().unwrap();
    assert!((ratio - HOPF_FINAL_RATIO).abs() <= HOPF_FINAL_TOL, "{ratio}");
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (cmd, name, file) in [
        (Command::Hopf, "hopf_ring.json", "hopf.csv"),
        (Command::Boxes, "boxes_decaying.json", "boxes.csv"),
        (Command::ThetaScan, "theta_scan.json", "theta_scan.csv"),
    ] {
        let ha = run(cmd, &read(name), a.path(), Backend::Float64, Some(1)).unwrap();
        let hb = run(cmd, &read(name), b.path(), Backend::Float64, Some(4)).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(std::fs::read(a.path().join(file)).unwrap(), std::fs::read(b.path().join(file)).unwrap());
    }
}

#[test]
fn backend_changes_the_hash() {
    let a = tempfile::tempdir().unwrap();
    let ha = run(Command::Boxes, &read("boxes_decaying.json"), a.path(), Backend::Rational, None).unwrap();
    let hb = run(Command::Boxes, &read("boxes_decaying.json"), a.path(), Backend::Float64, None).unwrap();
    assert_ne!(ha, hb);
}

fn scan_with(ell: usize, slopes: Option<Vec<String>>) -> ThetaScanConfig {
    let mut cfg: ThetaScanConfig = parse(&read("theta_scan.json")).unwrap();
    cfg.ell = ell;
    if let Some(s) = slopes {
        cfg.slopes = s;
    }
    cfg
}

#[test]
fn vertical_direction_is_flagged() {
    let rows = theta_scan(&scan_with(30, None)).unwrap();
    assert_eq!(rows[0].slope, stairtree::Rational::from_integer(0.into()));
    assert!(rows[0].saddle);
    assert!(rows[0].eta.is_none() && rows[0].hopf_dev.is_none());
}

#[test]
fn unflagged_fraction_grows_as_budget_shrinks() {
    let unflagged = |ell| theta_scan(&scan_with(ell, None)).unwrap().iter().filter(|r| !r.saddle).count();
    let counts: Vec<usize> = [80, 20, 5, 2].into_iter().map(unflagged).collect();
    assert!(counts.windows(2).all(|w| w[0] < w[1]), "{counts:?}");
}

#[test]
fn empty_grid_gives_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg: serde_json::Value = serde_json::from_str(&read("theta_scan.json")).unwrap();
    cfg["slopes"] = serde_json::json!([]);
    run(Command::ThetaScan, &cfg.to_string(), dir.path(), Backend::Rational, None).unwrap();
    let text = std::fs::read_to_string(dir.path().join("theta_scan.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert_eq!(text.lines().nth(1), Some("slope,saddle,eta,iota,hopf_dev"));
}

#[test]
fn maharam_nonconvergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "staircase": {
            "widths": {"window_start": 0, "window": [], "tail": {"kind": "constant", "value": "1/2"}},
            "slope": "5063/4096"
        },
        "a": [0.0, 0.1],
        "cells": 1000,
        "tol": 1e-14,
        "max_iter": 3,
        "cylinder_depth": 2
    });
    let e = run(Command::Maharam, &cfg.to_string(), dir.path(), Backend::Float64, None).unwrap_err();
    assert_eq!(e.exit_code(), 3, "{e}");
}

#[test]
fn windtree_orbit_writes_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "table": {"s": "1/2", "source": {"kind": "ringed", "n": 3}},
        "direction": {"a": "2/7", "b": "5/7"},
        "start": {"center": ["1/1", "1/1"], "s_coord": "1/10", "quadrant": 1},
        "budget": 50
    });
    let hash = run(Command::WindtreeOrbit, &cfg.to_string(), dir.path(), Backend::Rational, None).unwrap();
    let (first, rows) = rows(&dir.path().join("windtree_orbit.csv"));
    assert_eq!(first, format!("# manifest: {hash}"));
    assert!(rows.len() > 1);
}
