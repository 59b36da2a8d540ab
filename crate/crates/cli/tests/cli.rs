use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use inertia_region::boundary::parse_boundary_csv;
use inertia_region::geometry::DisjunctiveConstraint;
use inertia_region::load_document;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_inertia-region");

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn out_dir(tag: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join(format!("cli-{tag}"));
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("INERTIA_REGION_LOG", "error")
        .output()
        .expect("binary runs")
}

/// Runs a subcommand on a scenario into a fresh directory; panics unless it exits 0.
fn ok(sub: &str, scen: &str, tag: &str, extra: &[&str]) -> PathBuf {
    let out = out_dir(tag);
    let s = scenario(scen);
    let mut args = vec![
        sub,
        "--scenario",
        s.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(
        o.status.success(),
        "{sub} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    out
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap_or_else(|e| panic!("{file}: {e}"))
}

fn json(dir: &Path, file: &str) -> Value {
    serde_json::from_str(&read(dir, file)).expect("valid JSON")
}

#[test]
fn exit_codes() {
    let o = run(&[]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["trace", "--step", "abc"]).status.code(), Some(2));

    let missing = run(&["modes", "--scenario", "/nonexistent/none.json"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));

    // observed region out of range is a domain error
    let s = scenario("derived_3region.json");
    let o = run(&[
        "rocof-max",
        "--scenario",
        s.to_str().unwrap(),
        "--observed",
        "7",
        "--out",
        out_dir("bad").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn assess_verdicts() {
    let d = ok(
        "assess",
        "derived_3region.json",
        "assess-hi",
        &["--disturbed", "2", "--inertia", "90,90,53.3"],
    );
    let a = json(&d, "assessment.json");
    assert_eq!(a["verdict"], "secure");
    assert!(a["worst_rocof_hz_per_s"].as_f64().unwrap() <= 0.8);

    let d = ok(
        "assess",
        "derived_3region.json",
        "assess-lo",
        &["--disturbed", "2", "--inertia", "12,12,53.3"],
    );
    assert_eq!(json(&d, "assessment.json")["verdict"], "insecure-rocof");

    let d = ok(
        "assess",
        "derived_3region.json",
        "assess-range",
        &["--disturbed", "2", "--inertia", "5,90,53.3"],
    );
    assert_eq!(json(&d, "assessment.json")["verdict"], "insecure-range");
}

#[test]
fn rocof_max_is_deterministic_and_sane() {
    let a = ok("rocof-max", "derived_3region.json", "rm-a", &[]);
    let b = ok(
        "rocof-max",
        "derived_3region.json",
        "rm-b",
        &["--threads", "1"],
    );
    assert_eq!(read(&a, "rocof_max.json"), read(&b, "rocof_max.json"));
    let v = json(&a, "rocof_max.json");
    let value = v["value_hz_per_s"].as_f64().unwrap();
    assert!(value < 0.0 && value.is_finite());
    assert!(v["t_star_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn modes_and_simulation_outputs() {
    let d = ok("modes", "derived_3region.json", "modes", &[]);
    let modes = json(&d, "modes.json");
    let arr = modes["modes"].as_array().expect("mode list");
    assert!(!arr.is_empty());
    assert!(arr.iter().all(|m| m["real"].as_f64().unwrap() <= 1e-9));
    assert_eq!(read(&d, "modes.csv").lines().count(), 1 + arr.len());
    assert!(modes["decomposition"]["trig"].as_array().unwrap().len() >= 2);

    let d = ok(
        "simulate",
        "derived_3region.json",
        "sim",
        &["--t-end", "2", "--dt", "0.01"],
    );
    let csv = read(&d, "trajectory.csv");
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("t,"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 201);
    assert!(rows.iter().all(|r| r.len() == header.split(',').count()));
}

#[test]
fn trace_and_decompose_round_trip() {
    let d = ok("trace", "derived_3region.json", "trace", &[]);
    let (coords, rows) =
        parse_boundary_csv(&read(&d, "full_boundary.csv")).expect("boundary CSV parses");
    assert_eq!(coords, vec![0, 1]);
    assert!(rows.len() > 50);
    let summary = json(&d, "trace_summary.json");
    assert!(summary.is_object());

    let d = ok("decompose", "derived_3region.json", "decomp", &[]);
    let dj = DisjunctiveConstraint::from_json(&read(&d, "cells.json")).expect("cells parse");
    assert!(!dj.cells.is_empty());
    // boundary points lie on the secure set's edge, so inside it up to the simplification
    let inside = rows.iter().filter(|r| dj.contains(&r.h, 1.0)).count();
    assert!(
        inside as f64 >= 0.95 * rows.len() as f64,
        "{inside}/{}",
        rows.len()
    );
    assert!(read(&d, "polygon.csv").lines().count() > 3);
}

#[test]
fn dispatch_writes_a_validated_schedule() {
    let d = ok(
        "dispatch",
        "dispatch_3region.json",
        "dispatch",
        &["--security", "conservative"],
    );
    let s = json(&d, "schedule.json");
    assert_eq!(s["periods"].as_array().unwrap().len(), 8);
    let v = json(&d, "validation.json");
    assert!(v["periods"]
        .as_array()
        .unwrap()
        .iter()
        .all(|p| p["violation"] == false));
    let gens = read(&d, "schedule_generators.csv");
    assert!(gens.starts_with("period,generator,"));
    // 8 periods of 6 generators
    assert_eq!(gens.lines().count(), 1 + 8 * 6);

    let doc = load_document(&std::fs::read_to_string(scenario("dispatch_3region.json")).unwrap())
        .unwrap();
    assert_eq!(doc.generators.len(), 6);
}

#[test]
fn compare_orders_the_baselines() {
    let d = ok(
        "compare",
        "derived_3region.json",
        "compare",
        &["--lines", "21"],
    );
    let table = read(&d, "errors.csv");
    let err = |name: &str| -> f64 {
        table
            .lines()
            .find(|l| l.starts_with(name))
            .and_then(|l| l.split(',').nth(1))
            .and_then(|x| x.parse().ok())
            .unwrap_or_else(|| panic!("{name} row in {table}"))
    };
    assert!(err("coi") > err("conservative"));
    assert!(err("conservative") > err("proposed"));
    for f in [
        "boundary_coi.csv",
        "boundary_conservative.csv",
        "boundary_proposed.csv",
        "boundary_reference.csv",
    ] {
        parse_boundary_csv(&read(&d, f)).unwrap_or_else(|e| panic!("{f}: {e}"));
    }
}
