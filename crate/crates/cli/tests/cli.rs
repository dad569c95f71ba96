use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "trials = 2\nsnr_grid_db = [10]\nq = 16\nu = 2\nomegas_hz = [0, 2e8]\n";

fn dsce(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsce")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("exp.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn simulate_writes_csv_manifest_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    let o = dsce(&["simulate", "--preset", "fig6", "--config", &cfg, "--out", out.to_str().unwrap(), "--plot"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("fig6.csv")).unwrap();
    assert!(csv.starts_with("estimator,sweep_var,snr_db,mean_se,stderr,trials\n"));
    assert_eq!(csv.lines().count(), 7);
    assert!(out.join("fig6_manifest.json").exists());
    assert!(out.join("fig6.gp").exists());
}

#[test]
fn seed_and_trials_flags_reach_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    let o = dsce(&[
        "simulate", "--preset", "fig9", "--config", &cfg, "--seed", "42", "--trials", "3", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("fig9_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["trials"], 3);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = dsce(&["simulate", "--preset", "fig7", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(fs::read(a.join("fig7.csv")).unwrap(), fs::read(b.join("fig7.csv")).unwrap());
}

#[test]
fn unknown_preset_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = dsce(&["simulate", "--preset", "fig4", "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("fig4"));
}

#[test]
fn invalid_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "q = 0\n");
    let o = dsce(&["simulate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("`q`"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), "colour = 3\n");
    let o = dsce(&["simulate", "--config", &cfg]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("`colour`"), "{}", stderr(&o));
}

#[test]
fn spectrum_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().to_str().unwrap();
    let channel = dir.path().join("channel.json");
    let o = dsce(&["spectrum", "--config", &cfg, "--out", out, "--save-channel", channel.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let spectrum = fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert_eq!(spectrum.lines().count(), 1 + 16 * 2);

    let o = dsce(&["estimate", "--config", &cfg, "--out", out, "--channel", channel.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("dsce_report.json")).unwrap()).unwrap();
    assert!(report["metrics"]["cosine_h2"].as_f64().unwrap() > 0.0);
    let selection = fs::read_to_string(dir.path().join("dsce_selection.csv")).unwrap();
    assert_eq!(selection.lines().count(), 1 + 16);
}

#[test]
fn estimate_rejects_a_missing_channel() {
    let dir = tempfile::tempdir().unwrap();
    let o = dsce(&["estimate", "--channel", dir.path().join("nope.json").to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn ecdf_writes_one_curve_per_gap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("ecdf");
    let o = dsce(&["ecdf", "--config", &cfg, "--out", out.to_str().unwrap(), "--plot"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("fig2.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
    let script = fs::read_to_string(out.join("fig2.gp")).unwrap();
    assert_eq!(script.matches("with steps").count(), 2);
}
