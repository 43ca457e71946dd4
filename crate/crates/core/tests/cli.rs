//! Command-line behaviour: outputs, exit codes, and the measured-statistics
//! entry point.

use std::path::PathBuf;
use std::process::{Command, Output};

fn phasekey(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasekey"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("phasekey-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn calibrate_prints_paper_point() {
    let out = phasekey(&["calibrate", "--visibility", "0.0019"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("sigma      = 3.540"), "{text}");
    assert!(text.contains("q          = 0.992407"), "{text}");
    assert!(text.contains("minimizer"), "{text}");
}

#[test]
fn calibrate_without_visibility_is_a_config_error() {
    let out = phasekey(&["calibrate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn conflicting_q_and_visibility_rejected_by_parser() {
    let out = phasekey(&["--q", "0.9", "--visibility", "0.5", "calibrate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_value_exits_2() {
    let dir = tmp_dir("badq");
    let path = dir.join("bad.toml");
    std::fs::write(&path, "q = 1.5\n").unwrap();
    let out = phasekey(&["--config", path.to_str().unwrap(), "calibrate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("q"), "{err}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn missing_config_file_exits_2() {
    let out = phasekey(&["--config", "/nonexistent/config.toml", "sweep"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_loss_grid_exits_2() {
    let dir = tmp_dir("grid");
    let path = dir.join("empty.toml");
    std::fs::write(&path, "[loss_grid_db]\nstart = 30.0\nstop = 10.0\nstep = 5.0\n").unwrap();
    let out = phasekey(&["--config", path.to_str().unwrap(), "sweep"]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn keyrate_emits_one_csv_row() {
    let dir = tmp_dir("keyrate");
    let config = dir.join("cfg.toml");
    std::fs::write(&config, "q = 1.0\n[mu_s_grid]\nstart = 0.5\nstop = 0.5\nstep = 0.1\n")
        .unwrap();
    let out = phasekey(&["--config", config.to_str().unwrap(), "keyrate", "--loss", "20"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# phasekey sweep v1"));
    assert_eq!(
        lines.next().unwrap(),
        "loss_db,q,mu_s_opt,Y_L,e_ph_U,QZ_s,EZ_s,rate,reference_rate"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 9);
    assert_eq!(row[0], "20");
    let rate: f64 = row[7].parse().unwrap();
    assert!(rate > 0.0);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn keyrate_accepts_measured_observations() {
    let dir = tmp_dir("obs");
    // generate an observations file from the analytic model, then feed it
    // back through the measured-statistics entry point
    let params = phasekey_core::channel::ChannelParams::new(20.0, 1e-8).unwrap();
    let ints = phasekey_core::channel::Intensities::new(0.5, 0.1, 0.0).unwrap();
    let obs = phasekey_core::channel::observation_set(&ints, &params);
    let obs_path = dir.join("observations.csv");
    std::fs::write(&obs_path, obs.to_csv()).unwrap();

    let out = phasekey(&[
        "--q",
        "0.992407",
        "keyrate",
        "--loss",
        "20",
        "--observations",
        obs_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let row: Vec<&str> = text.lines().last().unwrap().split(',').collect();
    assert_eq!(row[2], "0.5"); // mu_s came from the file
    let rate: f64 = row[7].parse().unwrap();
    assert!(rate > 0.0);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn corrupt_observations_exit_2() {
    let dir = tmp_dir("badobs");
    let obs_path = dir.join("observations.csv");
    std::fs::write(&obs_path, "role,mu\nsignal,0.5\n").unwrap();
    let out = phasekey(&["keyrate", "--loss", "20", "--observations", obs_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn inconsistent_observations_exit_3() {
    let dir = tmp_dir("infeas");
    let params = phasekey_core::channel::ChannelParams::new(20.0, 1e-8).unwrap();
    let ints = phasekey_core::channel::Intensities::new(0.5, 0.1, 0.0).unwrap();
    let mut obs = phasekey_core::channel::observation_set(&ints, &params);
    obs.vacuum.gain_z = 0.9; // a vacuum cannot out-click the signal
    let obs_path = dir.join("observations.csv");
    std::fs::write(&obs_path, obs.to_csv()).unwrap();
    let out = phasekey(&["keyrate", "--loss", "20", "--observations", obs_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    std::fs::remove_dir_all(&dir).ok();
}
