use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_photonq");

const SYMMETRIC_ATOM: &str = r#""atom":{"gamma_right":0.5,"gamma_left":0.5,"detuning":0}"#;

fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run(command: &str, config: &Path, extra: &[&str]) -> Output {
    Command::new(BIN)
        .arg(command)
        .arg("--config")
        .arg(config)
        .args(extra)
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Parses a CSV body into its header and numeric rows; empty cells become NaN.
fn table(body: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = body.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

#[test]
fn pzero_starts_at_one_and_decays() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.json",
        &format!(r#"{{{SYMMETRIC_ATOM},"pulse":{{"kind":"exponential","rate":0.5}},"grid":{{"t_min":0,"t_max":20,"n_points":21}}}}"#),
    );
    let out = run("pzero", &cfg, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = table(&stdout(&out));
    assert_eq!(h, ["t", "P0_analytic", "P0_quadrature", "abs_diff"]);
    assert_eq!(rows[0][1], 1.0);
    assert!(rows.last().unwrap()[1] < 1e-3);
    assert!(rows.iter().all(|r| r[3] <= 1e-8));
}

#[test]
fn pzero_without_coupling_is_the_pulse_tail() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.json",
        r#"{"atom":{"gamma_right":0,"gamma_left":0,"detuning":0},"pulse":{"kind":"exponential","rate":0.8},"grid":{"t_min":0,"t_max":5,"n_points":6}}"#,
    );
    let out = run("pzero", &cfg, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for r in table(&stdout(&out)).1 {
        let expected = (-0.8 * r[0]).exp();
        assert!((r[1] - expected).abs() < 1e-12, "{r:?}");
        assert!((r[2] - expected).abs() < 1e-8, "{r:?}");
    }
}

#[test]
fn failed_cross_check_exits_two_and_still_writes() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.json",
        &format!(r#"{{{SYMMETRIC_ATOM},"pulse":{{"kind":"exponential","rate":0.5}},"grid":{{"t_min":0,"t_max":10,"n_points":6}}}}"#),
    );
    let target = dir.path().join("out.csv");
    let out = run("pzero", &cfg, &["--tol", "1e-30", "--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(std::fs::read_to_string(&target).unwrap().starts_with("t,P0_analytic"));
}

#[test]
fn events_reach_the_excited_atom_limits() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.json",
        &format!(
            r#"{{{SYMMETRIC_ATOM},"pulse":{{"kind":"exponential","rate":2}},"state":{{"rho_gg":0,"rho_ee":1}},"grid":{{"t_min":0,"t_max":40,"n_points":5}}}}"#
        ),
    );
    let out = run("events", &cfg, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = table(&stdout(&out));
    let last = rows.last().unwrap();
    let total = last[column(&h, "total")];
    assert!((total - 1.0).abs() <= 1e-5);
    let pairs = ["P_RR", "P_LR", "P_RL", "P_LL"].map(|c| last[column(&h, c)]);
    assert!((pairs.iter().sum::<f64>() - 1.0).abs() < 1e-5, "{pairs:?}");
    assert!((pairs[0] - 2.0 / 3.0).abs() < 1e-5, "{pairs:?}");
}

#[test]
fn events_of_a_ground_atom_transmit_a_third() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.json",
        &format!(r#"{{{SYMMETRIC_ATOM},"pulse":{{"kind":"exponential","rate":0.5}},"grid":{{"t_min":0,"t_max":60,"n_points":13}}}}"#),
    );
    let out = run("events", &cfg, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = table(&stdout(&out));
    for r in &rows {
        assert!((r[column(&h, "total")] - 1.0).abs() <= 1e-5);
    }
    let last = rows.last().unwrap();
    assert!((last[column(&h, "P_R")] - 1.0 / 3.0).abs() < 1e-4);
}

#[test]
fn densities_cover_one_and_two_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.json",
        r#"{"atom":{"gamma_right":0.6,"gamma_left":0.4,"detuning":0.3},"pulse":{"kind":"gaussian","center":2,"width":0.5},"state":{"rho_gg":0.5,"rho_ee":0.5,"rho_ge":[0.1,0.2]},"grid":{"t_min":0,"t_max":3,"n_points":4}}"#,
    );
    let out = run("densities", &cfg, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let body = stdout(&out);
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines[0], "t_prime,t_second,side_pattern,density");
    // three positive times: 3 × 2 one-count rows and 3 pairs × 4 two-count rows
    assert_eq!(lines.len() - 1, 6 + 12);
    assert!(lines[1].starts_with("1,,R,"));
    assert!(lines.iter().any(|l| l.starts_with("1,3,LR,")));
}

fn times_value(json: &serde_json::Value, key: &str, field: &str) -> f64 {
    json[key][field].as_f64().unwrap()
}

#[test]
fn times_match_reference_values() {
    let dir = TempDir::new().unwrap();
    let ground = write_config(
        &dir,
        "g.json",
        &format!(r#"{{{SYMMETRIC_ATOM},"pulse":{{"kind":"exponential","rate":0.5}}}}"#),
    );
    let out = run("times", &ground, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let j: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((times_value(&j, "tau1", "analytic") - 3.33).abs() < 0.01);
    assert!((times_value(&j, "tau1", "quadrature") - 3.33).abs() < 0.01);
    assert!(j["tau2"].is_null());

    let excited = write_config(
        &dir,
        "e.json",
        &format!(r#"{{{SYMMETRIC_ATOM},"pulse":{{"kind":"exponential","rate":2}},"state":{{"rho_gg":0,"rho_ee":1}}}}"#),
    );
    let out = run("times", &excited, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let j: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((times_value(&j, "tau1", "quadrature") - 0.33).abs() < 0.01);
    assert!((times_value(&j, "tau2", "analytic") - 0.94).abs() < 0.01);
    assert!((times_value(&j, "tau2", "quadrature") - 0.94).abs() < 0.01);
}

#[test]
fn times_reject_tau2_for_a_ground_atom() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.json",
        &format!(r#"{{{SYMMETRIC_ATOM},"pulse":{{"kind":"exponential","rate":0.5}},"times":{{"tau2":true}}}}"#),
    );
    assert_eq!(run("times", &cfg, &[]).status.code(), Some(1));
}

const CONVERGE: &str = r#""state":{"rho_gg":0,"rho_ee":1},"pulse":{"kind":"exponential","rate":1},"converge":{"horizon":3,"record":[{"time":0.7,"side":"R"},{"time":1.9,"side":"L"}]"#;

#[test]
fn converge_halves_the_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.json",
        &format!(r#"{{"atom":{{"gamma_right":0.6,"gamma_left":0.4,"detuning":0.3}},{CONVERGE}}}}}"#),
    );
    let out = run("converge", &cfg, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = table(&stdout(&out));
    assert_eq!(h, ["tau", "err", "ratio"]);
    assert!(rows[0][2].is_nan());
    for r in &rows[1..] {
        assert!((1.7..=2.3).contains(&r[2]), "{r:?}");
    }
}

#[test]
fn converge_with_one_step_has_no_ratio() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.json",
        &format!(r#"{{"atom":{{"gamma_right":0.6,"gamma_left":0.4,"detuning":0.3}},{CONVERGE},"taus":[0.01]}}}}"#),
    );
    let out = run("converge", &cfg, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let body = stdout(&out);
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].ends_with(','));
}

const SAMPLE: &str = r#"{"atom":{"gamma_right":0.5,"gamma_left":0.5,"detuning":0},"pulse":{"kind":"exponential","rate":2},"state":{"rho_gg":0,"rho_ee":1},"sampler":{"n_samples":4000,"tau":1e-3}}"#;

#[test]
fn sample_is_reproducible_and_consistent() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", SAMPLE);
    let a = run("sample", &cfg, &["--seed", "11"]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    let b = Command::new(BIN)
        .env("PHOTONQ_THREADS", "1")
        .args(["sample", "--seed", "11", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(b.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let body = stdout(&a);
    assert!(body.starts_with("quantity,count,estimate,std_error,analytic,z,pass\n"));
    assert!(body.lines().any(|l| l.starts_with("tau2,4000,")));
}

#[test]
fn sample_requires_a_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", SAMPLE);
    let out = run("sample", &cfg, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn sample_dump_lists_every_sample() {
    let dir = TempDir::new().unwrap();
    let dump = dir.path().join("samples.csv");
    let body = SAMPLE.replace(
        r#""sampler""#,
        &format!(r#""seed":5,"sample_dump":{:?},"sampler""#, dump.to_str().unwrap()),
    );
    let cfg = write_config(&dir, "c.json", &body);
    let out = run("sample", &cfg, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dumped = std::fs::read_to_string(&dump).unwrap();
    assert!(dumped.starts_with("sample_id,m,t1,side1,t2,side2\n"));
    assert_eq!(dumped.lines().count(), 4001);
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.json",
        &format!(r#"{{{SYMMETRIC_ATOM},"pulse":{{"kind":"exponential","rate":0.5}},"gird":{{}}}}"#),
    );
    let out = run("pzero", &cfg, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gird"));
}

#[test]
fn parse_errors_exit_one_and_help_exits_zero() {
    assert_eq!(Command::new(BIN).arg("bogus").output().unwrap().status.code(), Some(1));
    assert_eq!(Command::new(BIN).arg("--help").output().unwrap().status.code(), Some(0));
}
