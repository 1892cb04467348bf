//! End-to-end checks of the command-line interface: artifact layout,
//! reproducibility, error objects, and the synth → fit round trip.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_spincoh")
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(path: PathBuf) -> String {
    std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing {}", path.display()))
}

#[test]
fn levels_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "--out",
            "levels_run",
            "levels",
            "--system",
            "Yb171_site2",
            "--field",
            "0,0,0",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = read(dir.path().join("levels_run.csv"));
    assert!(
        csv.starts_with("index,energy_Hz"),
        "header row present with units"
    );
    assert_eq!(csv.lines().count(), 5);
    let manifest = read(dir.path().join("levels_run.manifest.json"));
    let parsed: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert!(parsed["command"].is_array());
    assert!(parsed["outputs"].as_array().unwrap().len() == 1);
    assert!(parsed["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn synth_requires_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "synth",
            "decay",
            "--t2",
            "1e-3",
            "--tau-min",
            "1e-5",
            "--tau-max",
            "2e-3",
        ],
    );
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("--seed"),
        "clap must demand the seed: {stderr}"
    );
}

#[test]
fn identical_runs_reproduce_outputs_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "--out",
        "synth_a",
        "synth",
        "decay",
        "--seed",
        "42",
        "--a0",
        "1.0",
        "--t2",
        "1e-3",
        "--noise-floor",
        "0.05",
        "--tau-min",
        "2e-5",
        "--tau-max",
        "5e-3",
        "--points",
        "50",
        "--snr",
        "100",
    ];
    assert!(run(dir.path(), &args).status.success());
    let first = read(dir.path().join("synth_a.csv"));
    let mut args_b = args;
    args_b[1] = "synth_b";
    assert!(run(dir.path(), &args_b).status.success());
    let second = read(dir.path().join("synth_b.csv"));
    assert_eq!(
        first, second,
        "same seed and inputs must give identical bytes"
    );
}

#[test]
fn synth_stim_then_fit_recovers_the_product() {
    let dir = tempfile::tempdir().unwrap();
    let synth_args = [
        "--out",
        "grid",
        "synth",
        "stim",
        "--seed",
        "7",
        "--a0",
        "1.0",
        "--r",
        "360",
        "--gsd",
        "361",
        "--t1",
        "0.047",
        "--tau-min",
        "1e-4",
        "--tau-max",
        "2.5e-3",
        "--tau-points",
        "10",
        "--tw-min",
        "1e-4",
        "--tw-max",
        "5.5e-3",
        "--tw-points",
        "12",
        "--snr",
        "100",
    ];
    let out = run(dir.path(), &synth_args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let fit_args = [
        "--out", "fit", "fit", "stim", "--input", "grid.csv", "--t1", "0.047", "--seed", "7",
    ];
    let out = run(dir.path(), &fit_args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let result: serde_json::Value =
        serde_json::from_str(&read(dir.path().join("fit.json"))).unwrap();
    let product = result["params"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["name"] == "R_Gamma_SD")
        .unwrap()["value"]
        .as_f64()
        .unwrap();
    let truth = 360.0 * 361.0;
    assert!(
        (product - truth).abs() / truth < 0.05,
        "recovered product {product} vs {truth}"
    );
}

#[test]
fn synth_decay_then_fit_recovers_t2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "--out",
            "d",
            "synth",
            "decay",
            "--seed",
            "9",
            "--a0",
            "1.0",
            "--t2",
            "1.2e-3",
            "--noise-floor",
            "0.04",
            "--tau-min",
            "2e-5",
            "--tau-max",
            "6e-3",
            "--points",
            "60",
            "--snr",
            "150",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = run(
        dir.path(),
        &["--out", "dfit", "fit", "decay", "--input", "d.csv"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let result: serde_json::Value =
        serde_json::from_str(&read(dir.path().join("dfit.json"))).unwrap();
    let t2 = result["params"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["name"] == "T2")
        .unwrap()["value"]
        .as_f64()
        .unwrap();
    assert!((t2 - 1.2e-3).abs() / 1.2e-3 < 0.03, "T2 = {t2}");
    // The model-curve CSV covers the data grid with a header.
    let curve = read(dir.path().join("dfit.csv"));
    assert!(curve.starts_with("abscissa,model_value"));
    assert_eq!(curve.lines().count(), 61);
}

#[test]
fn synth_crossing_then_fit_recovers_cooperativity() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "--out", "x", "synth", "crossing", "--seed", "3", "--f0", "8.07e9", "--kappa0", "56e3",
            "--g", "4.54e6", "--gamma", "1.5e6", "--b0", "0.326", "--slope", "17.9e9", "--bmin",
            "0.3218", "--bmax", "0.3302", "--points", "161", "--snr", "100",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = run(
        dir.path(),
        &[
            "--out", "xfit", "fit", "crossing", "--input", "x.csv", "--slope", "17.9e9",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let result: serde_json::Value =
        serde_json::from_str(&read(dir.path().join("xfit.json"))).unwrap();
    let c = result["fit"]["params"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["name"] == "C")
        .unwrap()["value"]
        .as_f64()
        .unwrap();
    let truth = (4.54e6_f64).powi(2) / (56e3 * 1.5e6);
    assert!((c - truth).abs() / truth < 0.08, "C = {c} vs {truth}");
}

#[test]
fn sd_temp_curve_is_monotone_for_the_nd_preset() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "--out",
            "sdtemp",
            "model",
            "sd-temp",
            "--system",
            "Nd145_YSO",
            "--field",
            "0.326,0,0",
            "--g",
            "2.4",
            "--xi",
            "1.94",
            "--gamma-res",
            "800",
            "--tmin",
            "0.014",
            "--tmax",
            "1.2",
            "--points",
            "40",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = read(dir.path().join("sdtemp.csv"));
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "T_K,Gamma_Hz,T2_s");
    let gammas: Vec<f64> = lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(gammas.len() >= 40);
    for pair in gammas.windows(2) {
        assert!(pair[1] >= pair[0] - 1e-9, "Γ(T) must be nondecreasing");
    }
    // The sidecar records every model input.
    let sidecar: serde_json::Value =
        serde_json::from_str(&read(dir.path().join("sdtemp.json"))).unwrap();
    assert_eq!(sidecar["xi"].as_f64().unwrap(), 1.94);
    assert!(sidecar["ensembles"].as_array().unwrap().len() == 8);
}

#[test]
fn resonance_sweep_reaches_the_high_field_peak() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "--out",
            "res",
            "resonance",
            "--system",
            "Yb171_site1",
            "--freq",
            "2.43e9",
            "--plane",
            "D1D2",
            "--angles",
            "-90:-60:1",
            "--bmax",
            "1.32",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = read(dir.path().join("res.csv"));
    let header = csv.lines().next().unwrap();
    assert_eq!(
        header,
        "angle_deg,subsite,B_T,f_Hz,M,g_eff,grad_norm_Hz_per_T"
    );
    let max_field = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse::<f64>().unwrap())
        .fold(f64::MIN, f64::max);
    assert!(
        max_field > 1.0,
        "expected a >1 T resonance near the critical angle, got {max_field}"
    );
}

#[test]
fn failures_emit_a_machine_readable_error_object() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &["fit", "decay", "--input", "does_not_exist.csv"],
    );
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let parsed: serde_json::Value =
        serde_json::from_str(stderr.trim()).expect("stderr must be a JSON error object");
    assert!(parsed["error"]["message"]
        .as_str()
        .unwrap()
        .contains("does_not_exist"));
}

#[test]
fn config_file_systems_are_usable_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"
[system.my_spin]
electron_spin = 0.5
nuclear_spin = 0.0
g_rows = [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]]
a_rows_mhz = [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
site = 1
concentration_ppm = 10.0
"#;
    std::fs::write(dir.path().join("cfg.toml"), config).unwrap();
    let out = run(
        dir.path(),
        &[
            "--config", "cfg.toml", "--out", "lv", "levels", "--system", "my_spin", "--field",
            "1,0,0",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = read(dir.path().join("lv.csv"));
    // g = 2 at 1 T: the gap is 27.99 GHz.
    let energies: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let gap = energies[1] - energies[0];
    assert!((gap - 27.99e9).abs() < 0.02e9);

    // The manifest embeds the resolved config.
    let manifest: serde_json::Value =
        serde_json::from_str(&read(dir.path().join("lv.manifest.json"))).unwrap();
    assert!(manifest["resolved_config"]
        .as_str()
        .unwrap()
        .contains("my_spin"));

    // Unknown keys are rejected with a nonzero exit.
    let bad = config.replace("site = 1", "site = 1\nmystery = 2");
    std::fs::write(dir.path().join("bad.toml"), bad).unwrap();
    let out = run(
        dir.path(),
        &[
            "--config", "bad.toml", "levels", "--system", "my_spin", "--field", "0,0,0",
        ],
    );
    assert!(!out.status.success());
}

#[test]
fn config_resolves_from_the_environment_variable() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"
[ensemble.pool]
density_ppm = 17.5
linewidth_hz = 8.7e6
matrix_element = 1.0
frequency_hz = 5.04e9
g_eff = 0.4
"#;
    let cfg_path = dir.path().join("env_cfg.toml");
    std::fs::write(&cfg_path, config).unwrap();
    let out = Command::new(bin())
        .current_dir(dir.path())
        .env("SPINCOH_CONFIG", &cfg_path)
        .args([
            "--out",
            "envrun",
            "model",
            "sd-temp",
            "--from-config",
            "--g",
            "1.0",
            "--xi",
            "6.0",
            "--points",
            "5",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest = read(dir.path().join("envrun.manifest.json"));
    assert!(manifest.contains("pool"));
}

#[test]
fn zefoz_reports_the_minimal_gradient_ray() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "--out",
            "zf",
            "zefoz",
            "--system",
            "Yb171_site2",
            "--freq-select",
            "2.4964e9",
            "--bmax",
            "0.04",
            "--grid",
            "9",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let sidecar: serde_json::Value =
        serde_json::from_str(&read(dir.path().join("zf.json"))).unwrap();
    let angle = sidecar["min_gradient_angle_deg"].as_f64().unwrap();
    assert!((angle - 49.0).abs() <= 3.0, "ray at {angle}°");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("minimal-gradient ray"));
}

#[test]
fn purcell_and_y89_models_write_single_row_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "--out", "p", "model", "purcell", "--g0", "100", "--kappa", "1e6",
        ],
    );
    assert!(out.status.success());
    let csv = read(dir.path().join("p.csv"));
    let t1: f64 = csv.lines().nth(1).unwrap().parse().unwrap();
    // κ/(4g²) in angular units.
    let expect =
        (2.0 * std::f64::consts::PI * 1e6) / (4.0 * (2.0 * std::f64::consts::PI * 100.0).powi(2));
    assert!((t1 - expect).abs() / expect < 1e-12);

    let out = run(
        dir.path(),
        &[
            "--out", "y", "model", "y89", "--g", "0.9732", "--field", "0.37", "--temp", "0.014",
        ],
    );
    assert!(out.status.success());
    let csv = read(dir.path().join("y.csv"));
    assert_eq!(
        csv.lines().next().unwrap(),
        "Gamma_SD_Y_Hz,R_Y_Hz,product_Hz2"
    );
    let row: Vec<f64> = csv
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert!((row[2] - 1.05e5).abs() / 1.05e5 < 0.3);
}
