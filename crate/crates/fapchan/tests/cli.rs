//! End-to-end checks of the binary: flag parsing, exit codes, and the exact
//! bytes of its deterministic outputs.

use std::process::{Command, Output};

fn fapchan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fapchan"))
        .args(args)
        .output()
        .expect("binary should launch")
}

fn stdout_lines(output: &Output) -> Vec<String> {
    String::from_utf8(output.stdout.clone())
        .expect("stdout should be UTF-8")
        .lines()
        .map(str::to_owned)
        .collect()
}

#[test]
fn density_sweep_has_inclusive_endpoints_and_cauchy_center() {
    let out = fapchan(&[
        "density",
        "--dim", "2",
        "--drift", "0,0",
        "--sigma2", "1",
        "--distance", "1",
        "--xi-range", "-5:5:0.1",
    ]);
    assert!(out.status.success());
    let lines = stdout_lines(&out);
    assert_eq!(lines[0], "xi,density");
    assert_eq!(lines.len(), 102, "header plus 101 rows");
    // Middle row sits at xi = 0 where the zero-drift density is 1/pi.
    assert_eq!(lines[51], "0.0000000000000000e0,3.1830988618379069e-1");
    assert!(lines[1].starts_with("-5.0000000000000000e0,"));
    assert!(lines[101].starts_with("5.0000000000000"));
}

#[test]
fn density_point_3d_matches_poisson_kernel_peak() {
    let out = fapchan(&[
        "density",
        "--dim", "3",
        "--drift", "0,0,0",
        "--sigma2", "1",
        "--distance", "1",
        "--point", "0,0",
    ]);
    assert!(out.status.success());
    let lines = stdout_lines(&out);
    assert_eq!(lines[0], "xi,eta,density");
    // 1 / (2 pi) to 17 significant digits.
    assert_eq!(
        lines[1],
        "0.0000000000000000e0,0.0000000000000000e0,1.5915494309189535e-1"
    );
}

#[test]
fn density_json_round_trips_through_serde() {
    let out = fapchan(&[
        "density",
        "--dim", "3",
        "--drift", "0.3,-0.1,-0.8",
        "--sigma2", "1",
        "--distance", "2",
        "--source", "0,0",
        "--point", "0.5,0.5",
        "--format", "json",
    ]);
    assert!(out.status.success());
    let doc: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("output should parse as JSON");
    assert_eq!(doc["params"]["dimension"], 3);
    assert_eq!(doc["rows"].as_array().expect("rows array").len(), 1);
    let density = doc["rows"][0]["density"].as_f64().expect("numeric density");
    let reference = 0.083_140_195_509_262_25;
    assert!(
        ((density - reference) / reference).abs() < 1e-15,
        "JSON density {density} drifted from {reference}"
    );
}

#[test]
fn density_requires_exactly_one_location_flag() {
    let neither = fapchan(&[
        "density", "--dim", "2", "--drift", "0,0", "--sigma2", "1", "--distance", "1",
    ]);
    assert_eq!(neither.status.code(), Some(2));

    let both = fapchan(&[
        "density",
        "--dim", "2",
        "--drift", "0,0",
        "--sigma2", "1",
        "--distance", "1",
        "--xi-range", "-1:1:0.5",
        "--point", "0",
    ]);
    assert_eq!(both.status.code(), Some(2), "clap conflict should exit 2");
}

#[test]
fn drift_length_must_match_dimension() {
    let out = fapchan(&[
        "density",
        "--dim", "3",
        "--drift", "0,0",
        "--sigma2", "1",
        "--distance", "1",
        "--point", "0,0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("--drift has 2 components"), "got: {stderr}");
}

#[test]
fn sample_is_bitwise_deterministic_for_fixed_seed() {
    let args = [
        "sample",
        "--dim", "2",
        "--drift", "0,-1",
        "--sigma2", "1",
        "--distance", "1",
        "-n", "300",
        "--dt", "1e-3",
        "--seed", "42",
        "--streams", "4",
    ];
    let first = fapchan(&args);
    let second = fapchan(&args);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout, "same seed must reproduce bytes");

    let mut reseeded_args = args;
    reseeded_args[13] = "43";
    let reseeded = fapchan(&reseeded_args);
    assert_ne!(first.stdout, reseeded.stdout, "seed must actually matter");

    let lines = stdout_lines(&first);
    assert_eq!(lines[0], "xi,tau,status");
    assert_eq!(lines.len(), 301);
}

#[test]
fn sample_rejects_zero_particles() {
    let out = fapchan(&[
        "sample",
        "--dim", "2",
        "--drift", "0,-1",
        "--sigma2", "1",
        "--distance", "1",
        "-n", "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("particle_count"));
}

#[test]
fn validate_bessel_passes_and_emits_report_array() {
    let out = fapchan(&["validate", "--suite", "bessel"]);
    assert_eq!(out.status.code(), Some(0));
    let reports: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("report should be JSON");
    let reports = reports.as_array().expect("array of reports");
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0]["name"], "bessel");
    assert_eq!(reports[0]["pass"], true);
    assert!(reports[0]["metrics"]["max_rel_error"].as_f64().expect("metric") < 1e-9);
}

#[test]
fn validate_unknown_suite_is_a_usage_error() {
    let out = fapchan(&["validate", "--suite", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown suite"));
}

#[test]
fn bvp_writes_a_grid_csv() {
    let out = fapchan(&[
        "bvp",
        "--dim", "2",
        "--drift", "0,-0.5",
        "--sigma2", "1",
        "--distance", "1",
        "--data", "indicator:0:1",
        "--spacing", "0.2",
    ]);
    assert!(out.status.success());
    let lines = stdout_lines(&out);
    assert_eq!(lines[0], "x1,x2,u");
    // 201 x 41 nodes on [-20, 20] x [0, 8] at h = 0.2.
    assert_eq!(lines.len(), 1 + 201 * 41);
}
