use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hardsphere_gp::checks::VerifyReport;
use hardsphere_gp::commands::VERIFY_REPORT;
use hardsphere_gp::manifest::{stale_files, RunManifest, MANIFEST_NAME};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hardsphere-gp"))
}

struct Run {
    out: PathBuf,
    output: Output,
    _dir: tempfile::TempDir,
}

fn run_cli(sub: &str, config: &str, extra: &[&str], envs: &[(&str, &str)]) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    fs::write(&cfg, config).unwrap();
    let out = dir.path().join("out");
    let mut cmd = bin();
    cmd.arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    let output = cmd.output().unwrap();
    Run { out, output, _dir: dir }
}

fn code(r: &Run) -> i32 {
    r.output.status.code().unwrap()
}

fn stderr(r: &Run) -> String {
    String::from_utf8_lossy(&r.output.stderr).into_owned()
}

fn manifest(out: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(out.join(MANIFEST_NAME)).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (String, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    (header, rows)
}

fn assert_manifest_valid(out: &Path) -> RunManifest {
    let m = manifest(out);
    assert!(!m.files.is_empty());
    assert!(stale_files(out, &m).unwrap().is_empty());
    for f in m.files.iter().filter(|f| f.name.ends_with(".csv")) {
        let text = fs::read_to_string(out.join(&f.name)).unwrap();
        let header = text.lines().next().unwrap();
        assert!(
            header.chars().all(|c| c.is_ascii_alphabetic() || c == '_' || c == ','),
            "{header}"
        );
    }
    m
}

#[test]
fn instance_profiles_on_the_circle() {
    let r = run_cli("instance", r#"{"d": 1, "eps": 0.5, "degrees": [5, 10, 20]}"#, &[], &[]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let m = assert_manifest_valid(&r.out);
    assert_eq!(m.subcommand, "instance");
    let mut half_widths = Vec::new();
    for n in [5usize, 10, 20] {
        let (header, rows) = csv_rows(&r.out.join(format!("profile_N{n}.csv")));
        assert_eq!(header, "geodesic_angle,f_value");
        assert_eq!(rows[0], vec![0.0, 1.0]);
        let peak = rows.iter().map(|r| r[1]).fold(f64::MIN, f64::max);
        assert_eq!(peak, 1.0);
        let first_below = rows.iter().find(|r| r[1] <= 0.5).unwrap()[0];
        half_widths.push(first_below * n as f64);
    }
    // half-width times N stays within a narrow band
    let hi = half_widths.iter().cloned().fold(f64::MIN, f64::max);
    let lo = half_widths.iter().cloned().fold(f64::MAX, f64::min);
    assert!(hi <= 1.3 * lo, "{half_widths:?}");
    let class: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(r.out.join("class.json")).unwrap()).unwrap();
    assert_eq!(class["profiles"].as_array().unwrap().len(), 3);
    assert!(class["class"].is_null());
}

#[test]
fn instance_with_class() {
    let r = run_cli(
        "instance",
        r#"{"d": 2, "eps": 0.001, "degrees": [4], "class_budget": 1.0}"#,
        &[],
        &[],
    );
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let class: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(r.out.join("class.json")).unwrap()).unwrap();
    let members = class["class"]["functions"].as_array().unwrap();
    assert!(members.len() >= 2);
}

#[test]
fn invalid_configuration_exits_two_and_names_field() {
    let r = run_cli("instance", r#"{"d": 1, "eps": -0.5, "degrees": [5]}"#, &[], &[]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("`eps`"), "{}", stderr(&r));
    assert!(!r.out.join(MANIFEST_NAME).exists());

    let r = run_cli(
        "mig",
        r#"{"d": 1, "noise_var": 1.0, "horizons": [64], "candidates": 64, "extra": 1}"#,
        &[],
        &[],
    );
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("extra"));

    let r = run_cli("mig", "not json", &[], &[]);
    assert_eq!(code(&r), 2);
}

#[test]
fn numerical_failure_exits_four() {
    // eps too close to B leaves no admissible degree
    let cfg = r#"{"algorithm": "gp_ucb", "d": 1, "sigma": 0.05, "eps": 0.9, "delta": 0.2,
                  "horizon": 10, "trials": 30, "event": "report_in_region", "pairs": [[0, 1]]}"#;
    let r = run_cli("certify", cfg, &[], &[]);
    assert_eq!(code(&r), 4, "{}", stderr(&r));
}

#[test]
fn missing_config_exits_one() {
    let out = bin()
        .args(["mig", "--config", "/nonexistent/config.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn thread_cap_is_validated() {
    let cfg = r#"{"d": 1, "noise_var": 1.0, "horizons": [16], "candidates": 32}"#;
    let r = run_cli("mig", cfg, &[], &[("HSGP_THREADS", "zero")]);
    assert_eq!(code(&r), 2);
    let r = run_cli("mig", cfg, &[], &[("HSGP_THREADS", "1")]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
}

#[test]
fn verify_passes_and_report_round_trips() {
    let r = run_cli("verify", "{}", &[], &[]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let m = assert_manifest_valid(&r.out);
    assert!(m.checks.iter().all(|c| c.passed));
    let text = fs::read_to_string(r.out.join(VERIFY_REPORT)).unwrap();
    let report: VerifyReport = serde_json::from_str(&text).unwrap();
    assert!(report.all_passed);
    assert!(report.checks.len() >= 20);
    assert_eq!(serde_json::to_string_pretty(&report).unwrap(), text);
}

#[test]
fn perturbed_profile_fails_verification() {
    let r = run_cli("verify", r#"{"perturb_b": 1.01}"#, &[], &[]);
    assert_eq!(code(&r), 3, "{}", stderr(&r));
    let report: VerifyReport = serde_json::from_str(&fs::read_to_string(r.out.join(VERIFY_REPORT)).unwrap()).unwrap();
    let failed: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    assert_eq!(failed, ["hard_profile_matches_dirichlet_form"]);
    assert!(stale_files(&r.out, &manifest(&r.out)).unwrap().is_empty());
}

#[test]
fn mig_ratio_band() {
    let cfg = r#"{"d": 1, "noise_var": 1.0, "horizons": [64, 256, 1024], "candidates": 1024}"#;
    let r = run_cli("mig", cfg, &[], &[]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert_manifest_valid(&r.out);
    let (header, rows) = csv_rows(&r.out.join("mig.csv"));
    assert_eq!(header, "T,greedy_gain,bound_minM,M_star,ratio_to_theory");
    let ratios: Vec<f64> = rows.iter().map(|r| r[4]).collect();
    let hi = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let lo = ratios.iter().cloned().fold(f64::MAX, f64::min);
    assert!(hi <= 2.0 * lo);
    assert!(rows.iter().all(|r| r[1] <= r[2]));
}

#[test]
fn regret_with_schedule() {
    let cfg = r#"{"algorithm": "gp_ucb", "d": 1, "sigma": 0.1, "horizons": [100, 200], "trials": 2}"#;
    let r = run_cli("regret", cfg, &[], &[]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert_manifest_valid(&r.out);
    let (header, rows) = csv_rows(&r.out.join("regret.csv"));
    assert!(header.starts_with("T,eps,n_bar,members,trial,worst_member,cumulative_regret"));
    assert_eq!(rows.len(), 4);
    assert!(rows[0][1] > rows[2][1], "eps shrinks with T");
    assert!(rows.iter().all(|r| r[6] > 0.0));
    let (header, counts) = csv_rows(&r.out.join("region_counts.csv"));
    assert_eq!(header, "T,trial,region,count");
    let total: f64 = counts
        .iter()
        .filter(|c| c[0] == 100.0 && c[1] == 0.0)
        .map(|c| c[3])
        .sum();
    assert_eq!(total, 100.0);
}

#[test]
fn certify_self_pair_row() {
    let cfg = r#"{"algorithm": "gp_ucb", "d": 1, "sigma": 0.02, "eps": 0.05, "delta": 0.2, "horizon": 40,
                  "trials": 30, "event": "report_in_region", "pairs": [[0, 0], [0, 1]], "candidates": 64}"#;
    let r = run_cli("certify", cfg, &[], &[]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert_manifest_valid(&r.out);
    let text = fs::read_to_string(r.out.join("certificates.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].ends_with("lhs,rhs,verdict"));
    assert!(
        lines[1].starts_with("0,0,") && lines[1].ends_with(",premises_not_met"),
        "{}",
        lines[1]
    );
    assert_eq!(lines.len(), 3);

    let bad = cfg.replace("[0, 1]]", "[0, 99]]");
    let r = run_cli("certify", &bad, &[], &[]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("`pairs`"));
}

#[test]
fn seed_override_and_rerun_identity() {
    let cfg = r#"{"d": 1, "noise_var": 0.5, "horizons": [8, 32], "candidates": 64, "seed": 1}"#;
    let a = run_cli("mig", cfg, &[], &[]);
    let b = run_cli("mig", cfg, &[], &[]);
    let c = run_cli("mig", cfg, &["--seed", "2"], &[]);
    let read = |r: &Run| fs::read(r.out.join("mig.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    let (ma, mb, mc) = (manifest(&a.out), manifest(&b.out), manifest(&c.out));
    assert_eq!(ma.config_sha256, mb.config_sha256);
    assert_eq!(ma.files, mb.files);
    assert_eq!((ma.seed, mc.seed), (1, 2));
}

#[test]
fn tampered_output_is_detected() {
    let r = run_cli(
        "mig",
        r#"{"d": 1, "noise_var": 1.0, "horizons": [8], "candidates": 16}"#,
        &[],
        &[],
    );
    assert_eq!(code(&r), 0);
    let path = r.out.join("mig.csv");
    let mut text = fs::read_to_string(&path).unwrap();
    text.push('\n');
    fs::write(&path, text).unwrap();
    assert_eq!(stale_files(&r.out, &manifest(&r.out)).unwrap(), ["mig.csv"]);
}
