//! End-to-end checks of the command line driver: exit codes, output
//! files, and byte-identical outputs across worker counts.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cuspwind"))
}

fn groups_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join("groups")
}

fn temp_out(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cuspwind-cli-{name}"));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn validate_exit_codes() {
    let out = temp_out("validate");
    let ok = bin()
        .args(["validate", "--group"])
        .arg(groups_dir().join("cusps_hyperbolic.toml"))
        .args(["--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(out.join("validation.txt").exists());

    let bad = bin()
        .args(["validate", "--group"])
        .arg(groups_dir().join("invalid_overlap.toml"))
        .args(["--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert!(fs::read_to_string(out.join("validation.txt"))
        .unwrap()
        .contains("invalid"));

    let malformed = bin()
        .args(["validate", "--group"])
        .arg(groups_dir().join("invalid_malformed.toml"))
        .args(["--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(malformed.status.code(), Some(2));
}

#[test]
fn cf_oracle_writes_tables_and_is_worker_independent() {
    let out1 = temp_out("cf1");
    let out2 = temp_out("cf2");
    for (out, workers) in [(&out1, "1"), (&out2, "2")] {
        let r = bin()
            .args(["--workers", workers, "--out"])
            .arg(out)
            .args(["cf-oracle", "--n", "200", "--trials", "500", "--seed", "9"])
            .output()
            .unwrap();
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    let a = fs::read(out1.join("cf_samples.csv")).unwrap();
    let b = fs::read(out2.join("cf_samples.csv")).unwrap();
    assert_eq!(a, b, "sample tables differ across worker counts");
    let summary = fs::read_to_string(out1.join("cf_summary.txt")).unwrap();
    assert!(summary.contains("# cuspwind-evt-summary"));
    assert!(summary.contains("ks_vs_theory"));
    assert!(out1.join("cf_liminf.csv").exists());
    assert!(out1.join("cf_liminf.svg").exists());
}

#[test]
fn delta_and_kappa_reports() {
    let out = temp_out("kappa");
    let r = bin()
        .args(["--out"])
        .arg(&out)
        .args(["delta", "--group"])
        .arg(groups_dir().join("mirror_two_cusps.toml"))
        .args(["--depth", "10"])
        .output()
        .unwrap();
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let delta_text = fs::read_to_string(out.join("delta.txt")).unwrap();
    assert!(delta_text.contains("delta = 0.6"), "{delta_text}");

    let r = bin()
        .args(["--out"])
        .arg(&out)
        .args(["kappa", "--group"])
        .arg(groups_dir().join("mirror_two_cusps.toml"))
        .args(["--depths", "5,6", "--delta-depth", "10", "--n-max", "12"])
        .output()
        .unwrap();
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let kappa_text = fs::read_to_string(out.join("kappa.txt")).unwrap();
    assert!(kappa_text.contains("kappa_direct"));
    assert!(kappa_text.contains("digest"));
    assert!(kappa_text.contains("s_margin"));

    // consolidation picks up both reports
    let r = bin().args(["--out"]).arg(&out).arg("report").output().unwrap();
    assert!(r.status.success());
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("## delta.txt"));
    assert!(report.contains("## kappa.txt"));
}

#[test]
fn report_fails_cleanly_without_caches() {
    let out = temp_out("empty-report");
    let r = bin().args(["--out"]).arg(&out).arg("report").output().unwrap();
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("no cached outputs"));
}

#[test]
fn simulate_markov_on_small_group() {
    let out = temp_out("simulate");
    let r = bin()
        .args(["--out"])
        .arg(&out)
        .args(["simulate", "--sampler", "markov", "--group"])
        .arg(groups_dir().join("mirror_two_cusps.toml"))
        .args(["--n", "50", "--trials", "300", "--seed", "4", "--depth", "6"])
        .output()
        .unwrap();
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(out.join("samples.csv").exists());
    assert!(out.join("evt_summary.txt").exists());
    assert!(out.join("blocks.csv").exists());
    assert!(out.join("cdf.svg").exists());
    let stdout = String::from_utf8_lossy(&r.stdout);
    assert!(stdout.contains("approximate sampler"), "{stdout}");
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let out = temp_out("config");
    let config = out.join("run.toml");
    fs::write(
        &config,
        format!(
            "group = \"{}\"\nseed = 11\nn = 100\ntrials = 200\n",
            groups_dir().join("cusps_hyperbolic.toml").display()
        ),
    )
    .unwrap();
    // group comes from the config; n overridden on the command line
    let r = bin()
        .args(["--out"])
        .arg(&out)
        .args(["--config"])
        .arg(&config)
        .args(["cf-oracle", "--n", "50"])
        .output()
        .unwrap();
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let table = fs::read_to_string(out.join("cf_samples.csv")).unwrap();
    assert!(table.starts_with("# cuspwind-samples v1"));
    assert!(table.contains("n=50 trials=200 seed=11"), "{table}");
}
