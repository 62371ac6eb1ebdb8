use std::path::Path;
use std::process::{Command, Output};

fn ioncavity(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ioncavity"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, n_trials: u64) -> String {
    let path = dir.join("small.toml");
    std::fs::write(&path, format!("mode = \"trajectory\"\n[run]\nn_trials = {n_trials}\nbatch_trials = 700\n")).unwrap();
    path.to_str().unwrap().to_string()
}

fn read(dir: &Path, f: &str) -> Vec<u8> {
    std::fs::read(dir.join(f)).unwrap_or_else(|e| panic!("{}: {e}", dir.join(f).display()))
}

#[test]
fn trajectory_bundle_is_deterministic_and_reanalyzable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), 3000);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for out in [&a, &b] {
        let o = ioncavity(&["run", "--config", &cfg, "--seed", "4", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["summary.txt", "clicks.csv", "emissions.csv", "g2.csv", "pulse_shape.csv"] {
        assert_eq!(read(&a, f), read(&b, f), "{f} differs between identical runs");
    }
    let clicks = a.join("clicks.csv");
    let o = ioncavity(&["analyze", clicks.to_str().unwrap(), "--config", &cfg, "--out", c.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["g2.csv", "g2_raw.csv", "pulse_shape.csv", "analysis.txt"] {
        assert_eq!(read(&a, f), read(&c, f), "{f} differs after re-analysis");
    }
    let header = String::from_utf8(read(&a, "clicks.csv")).unwrap();
    assert!(header.starts_with("time_ps,detector\n"));
}

#[test]
fn debug_origins_adds_column() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), 500);
    let out = tmp.path().join("o");
    let o = ioncavity(&["run", "--config", &cfg, "--debug-origins", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8(read(&out, "clicks.csv")).unwrap();
    assert!(text.starts_with("time_ps,detector,origin\n"));
}

#[test]
fn figures_on_empty_directory_lists_all_three() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ioncavity(&["figures", "--out", tmp.path().to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    for fig in ["figure 2", "figure 3", "figure 4"] {
        assert!(err.contains(fig), "{err}");
    }
}

#[test]
fn figures_use_published_binning() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), 500);
    let out = tmp.path().join("o");
    assert!(ioncavity(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let o = ioncavity(&["figures", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fig2 = String::from_utf8(read(&out, "fig2_g2.gp")).unwrap();
    let fig3 = String::from_utf8(read(&out, "fig3_pulse_shape.gp")).unwrap();
    assert!(fig2.contains("bin_us = 1.0"));
    assert!(fig3.contains("bin_us = 0.5"));
    assert!(!out.join("fig4_populations.gp").exists());
}

#[test]
fn validate_config_reports_every_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, "format_version = 3\n[detector]\nqe_a = 2.0\nafterpulse_prob = -1.0\n[run]\nprng = \"lcg\"\n").unwrap();
    let o = ioncavity(&["validate-config", "--config", path.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    for needle in ["format_version", "qe", "afterpulse_prob", "prng"] {
        assert!(err.contains(needle), "missing {needle}: {err}");
    }
}

#[test]
fn validate_config_prints_canonical_form() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), 10);
    let o = ioncavity(&["validate-config", "--config", &cfg]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("n_trials = 10"));
    assert!(text.contains("omega_drive_mhz = 30.0"));
}

#[test]
fn missing_input_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ioncavity(&["analyze", tmp.path().join("nope.csv").to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert!(!o.status.success());
}
