use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_photostat"));
    c.env_remove(photostat_cli::OUT_DIR_ENV);
    c
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), &[]).status.code(), Some(1));
    assert_eq!(run_in(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(run_in(dir.path(), &["correlate", "--bin-ps", "x"]).status.code(), Some(1));
    assert_eq!(run_in(dir.path(), &["fit"]).status.code(), Some(1));
    let help = run_in(dir.path(), &["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains(photostat_cli::OUT_DIR_ENV));
}

#[test]
fn every_flag_is_documented() {
    assert_eq!(photostat_cli::undocumented_flags(), Vec::<String>::new());
}

#[test]
fn computation_errors_exit_two_with_json() {
    let dir = tempfile::tempdir().unwrap();
    // Below the Antoine pole.
    let out = run_in(dir.path(), &["thermo", "report", "--tb", "10K"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "InvalidCoefficients");

    let out = run_in(dir.path(), &["fit", "g2", "--hist", "missing.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "IoFailure");
    assert!(err["message"].as_str().unwrap().contains("missing.csv"));
}

#[test]
fn thermo_report_at_equal_temperatures_is_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["thermo", "report", "--tb", "25C", "--tt", "25C", "--sigma", "2.6", "--out", "r.json"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(dir.path().join("r.json"));
    assert_eq!(r["delta_mu"], 0.0);
    assert_eq!(r["predicted_morphology"], "equilibrium");
    let m = json(dir.path().join("r.manifest.json"));
    assert_eq!(m["command"], serde_json::json!(["thermo", "report"]));
}

#[test]
fn thermo_sweep_writes_one_row_per_temperature() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["thermo", "sweep", "--tb-range", "200C:250C:5C", "--sigma", "2.63"]);
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("thermo-sweep.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 12);
    assert!(lines[1].ends_with("needles") && lines[11].ends_with("mesas"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("crossover"));
}

#[test]
fn bundled_saturation_data_fits_to_seventy_five() {
    let dir = tempfile::tempdir().unwrap();
    // The bundled file is the fig8 generator at seed 75.
    let regenerated = dir.path().join("sat.csv");
    photostat_cli::write_saturation_csv(&regenerated, 75).unwrap();
    assert_eq!(fs::read(&regenerated).unwrap(), fs::read(bundled("sat75.csv")).unwrap());

    let points = bundled("sat75.csv");
    let out = run_in(dir.path(), &["fit", "saturation", "--points", points.to_str().unwrap()]);
    assert!(out.status.success());
    let fit = json(dir.path().join("fit-saturation.json"));
    let i_sat = fit["params"]["i_sat"].as_f64().unwrap();
    let err = fit["std_errors"]["i_sat"].as_f64().unwrap();
    assert!((i_sat - 75.0).abs() < 5.0, "I_sat = {i_sat}");
    assert!(err > 0.5 && err < 5.0, "σ = {err}");
    assert!(fit["converged"].as_bool().unwrap());
}

#[test]
fn reproduce_fig7_single_molecule() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["reproduce", "fig7", "--seed", "1", "--out", "run"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("run");
    for f in ["stream.bin", "hist.csv", "hist.json", "fit.json", "ensemble.json", "manifest.json"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let fit = json(run.join("fit.json"));
    let m = fit["params"]["n_molecules_m"].as_f64().unwrap();
    assert!((1.0..=1.2).contains(&m), "m = {m}");
    let g0 = fit["derived"]["g2_zero"]["value"].as_f64().unwrap();
    assert!(g0 < 0.5);
}

#[test]
fn manual_chain_is_deterministic_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ensemble = serde_json::json!({
        "molecules": [{ "t1_ns": 4.23 }],
        "excitation": { "mode": "pulsed", "pulse_period_ns": 25.0, "excitation_prob_per_pulse": 0.1 },
        "detection": { "efficiency": 0.02, "split_ratio": 0.5, "dark_rate_per_detector": 500.0 },
        "duration_s": 3.0,
        "seed": 9
    });
    fs::write(d.join("ens.json"), ensemble.to_string()).unwrap();
    let out = run_in(d, &["simulate", "--config", "ens.json", "--out", "a.bin"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = fs::read(d.join("a.bin")).unwrap();

    // Re-run from the manifest's argv.
    let manifest = json(d.join("a.manifest.json"));
    let argv: Vec<String> = manifest["argv"].as_array().unwrap()[1..]
        .iter()
        .map(|v| v.as_str().unwrap().to_owned())
        .collect();
    fs::remove_file(d.join("a.bin")).unwrap();
    let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
    assert!(run_in(d, &argv).status.success());
    assert_eq!(fs::read(d.join("a.bin")).unwrap(), first);

    // The CSV encoding carries the same clicks.
    assert!(run_in(d, &["simulate", "--config", "ens.json", "--out", "a.csv"]).status.success());
    for input in ["a.bin", "a.csv"] {
        let out = run_in(d, &["correlate", "--in", input, "--out", &format!("{input}.hist.csv")]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let hb = photostat::CorrelationHistogram::read_csv(d.join("a.bin.hist.csv")).unwrap();
    let hc = photostat::CorrelationHistogram::read_csv(d.join("a.csv.hist.csv")).unwrap();
    assert_eq!(hb.counts, hc.counts);

    let out = run_in(d, &["fit", "g2", "--hist", "a.bin.hist.csv", "--out", "g.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fit = json(d.join("g.json"));
    assert_eq!(fit["param_names"], serde_json::json!(["background_b", "amplitude_n", "n_molecules_m", "t1_ns"]));
}

#[test]
fn out_dir_variable_redirects_relative_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("artifacts");
    let out = bin()
        .current_dir(dir.path())
        .env(photostat_cli::OUT_DIR_ENV, &target)
        .args(["thermo", "report", "--tb", "240C"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(target.join("thermo-report.json").exists());
    assert!(target.join("thermo-report.manifest.json").exists());
}

#[test]
fn scan_render_detect_polarize() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let layout = serde_json::json!({
        "emitters": [
            { "x_um": 4.0, "y_um": 4.0, "dipole_angle_deg": 30.0, "brightness": 1.0 },
            { "x_um": 11.0, "y_um": 9.0, "dipole_angle_deg": 120.0, "brightness": 1.0 }
        ]
    });
    fs::write(d.join("layout.json"), layout.to_string()).unwrap();
    let ok = |args: &[&str]| {
        let out = run_in(d, args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    ok(&["scan", "render", "--layout", "layout.json", "--polarizer-deg", "75", "--seed", "2"]);
    ok(&["scan", "detect", "--image", "image.csv"]);
    let spots = json(d.join("spots.json"));
    assert_eq!(spots.as_array().unwrap().len(), 2);
    ok(&["scan", "polarize", "--layout", "layout.json", "--seed", "2"]);
    let fits = json(d.join("series.fits.json"));
    let mut angles: Vec<f64> = fits
        .as_array()
        .unwrap()
        .iter()
        .map(|f| {
            let phi = f["fit"]["params"]["phase_phi_deg"].as_f64().unwrap();
            (-phi).rem_euclid(180.0)
        })
        .collect();
    angles.sort_by(f64::total_cmp);
    assert!((angles[0] - 30.0).abs() < 3.0 && (angles[1] - 120.0).abs() < 3.0, "{angles:?}");
}

#[test]
fn fit_polarization_and_survival_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut pol = String::from("angle_deg,signal\n");
    for k in 0..12 {
        let t = 15.0 * k as f64;
        pol += &format!("{t},{}\n", 0.1 + 0.9 * ((t - 70.0f64).to_radians().cos()).powi(2));
    }
    fs::write(d.join("pol.csv"), pol).unwrap();
    assert!(run_in(d, &["fit", "polarization", "--points", "pol.csv"]).status.success());
    let fit = json(d.join("fit-polarization.json"));
    let dipole = fit["derived"]["dipole_angle_deg"]["value"].as_f64().unwrap();
    assert!((dipole - 70.0).abs() < 1e-6, "{dipole}");

    let mut surv = String::from("time_s,survivors\n");
    for t in 0..20 {
        surv += &format!("{t},{}\n", 36.0 * (-(t as f64) / 5.7).exp());
    }
    fs::write(d.join("surv.csv"), surv).unwrap();
    assert!(run_in(d, &["fit", "survival", "--curve", "surv.csv"]).status.success());
    let fit = json(d.join("fit-survival.json"));
    assert!((fit["params"]["tau_s"].as_f64().unwrap() - 5.7).abs() < 1e-6);

    fs::write(d.join("bad.csv"), "time_s,survivors\n0,36\n1,oops\n").unwrap();
    let out = run_in(d, &["fit", "survival", "--curve", "bad.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "MalformedRecord");
}
