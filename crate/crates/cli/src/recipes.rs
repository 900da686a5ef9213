use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use photostat::correlator::{sidecar_path, DEFAULT_HALF_WINDOW_PS};
use photostat::imaging::{polarization_batch, spread_histogram, BatchConfig};
use photostat::models::{
    eval_survival, fit_g2, fit_saturation, fit_survival, SaturationParams, SurvivalModel,
    SurvivalVariant,
};
use photostat::pipeline::{
    bleaching_population, correlate_file, simulate_to_file, synthetic_saturation, HbtScenario,
};
use photostat::sim::{simulate_bleaching_survival, ExcitationConfig};
use photostat::thermo::{
    crossover_temperature, extract_sigma, sweep, ThermoScenario, VaporPressureCorrelation,
    ANTHRACENE_AB, ANTHRACENE_GAMMA_001, PRESET_NAMES,
};
use photostat::timetag::DEFAULT_BIN_WIDTH_PS;
use photostat::units::{celsius_to_kelvin, kelvin_to_celsius};
use photostat::{Estimate, Result, TagFormat};
use serde_json::json;

use crate::args::{Recipe, ReproduceArgs, Scenario};
use crate::commands::{write_rows, write_sweep_csv};
use crate::manifest::Outcome;
use crate::util::{resolve_out, temperature_range, write_json};

/// Pulse period of the g² recipe, ns.
const PULSE_NS: f64 = 25.0;

/// Saturation curve of the fig8 recipe: I_sat in kW/cm², R_max in kC/s.
pub const SATURATION_TRUTH: SaturationParams = SaturationParams {
    i_sat: 75.0,
    r_max: 440.0,
};

/// Intensities of the fig8 recipe, kW/cm², log-spaced from 5 to about 250.
pub fn saturation_intensities() -> Vec<f64> {
    // A running product, not `powi`, so every build profile rounds alike.
    std::iter::successors(Some(5.0), |i| Some(i * 1.3)).take(16).collect()
}

pub const SATURATION_NOISE: f64 = 0.02;

/// Exposure checkpoints of the mixed-population bleaching run, s.
const MIXED_CHECKPOINTS: [f64; 14] = [
    0.0, 5.0, 10.0, 20.0, 30.0, 60.0, 120.0, 300.0, 600.0, 1200.0, 1800.0, 3600.0, 7200.0, 15600.0,
];

pub fn reproduce(a: &ReproduceArgs) -> Result<Outcome> {
    let name = a
        .recipe
        .to_possible_value()
        .map(|v| v.get_name().to_owned())
        .unwrap_or_default();
    let dir = resolve_out(a.out.as_deref().unwrap_or(Path::new(&name)))?;
    fs::create_dir_all(&dir)?;
    let outcome = match a.recipe {
        Recipe::Fig7 => fig7(a, &dir)?,
        Recipe::Fig8 => fig8(a, &dir)?,
        Recipe::Fig6 => fig6(a, &dir)?,
        Recipe::Fig9 => fig9(a, &dir)?,
        Recipe::Sec2Thermo => sec2_thermo(&dir)?,
    };
    Ok(outcome.manifest_at(dir.join("manifest.json")))
}

fn fig7(a: &ReproduceArgs, dir: &Path) -> Result<Outcome> {
    let scenario = match a.scenario {
        Scenario::Single => HbtScenario::single_molecule(a.duration_s, a.seed),
        Scenario::Two => HbtScenario::two_molecule(a.duration_s, a.seed),
    };
    let ensemble = scenario.ensemble()?;
    let format: TagFormat = a.format.into();
    let ensemble_path = dir.join("ensemble.json");
    write_json(&ensemble_path, &ensemble)?;
    let stream = dir.join(match format {
        TagFormat::Binary => "stream.bin",
        TagFormat::Csv => "stream.csv",
    });
    let clicks = simulate_to_file(&ensemble, &stream, format)?;
    let bins = photostat::DelayBins::symmetric(DEFAULT_HALF_WINDOW_PS, DEFAULT_BIN_WIDTH_PS)?;
    let hist = correlate_file(&stream, format, bins)?;
    let hist_path = dir.join("hist.csv");
    hist.write_csv(&hist_path)?;
    let fit = fit_g2(&hist, PULSE_NS, None)?;
    let fit_path = dir.join("fit.json");
    write_json(&fit_path, &fit)?;
    let m_true = ensemble.effective_emitter_number();
    Ok(Outcome::new(
        vec!["reproduce", "fig7"],
        json!({
            "scenario": scenario,
            "true_m": m_true,
            "bins": bins,
            "pulse_period_ns": PULSE_NS,
        }),
    )
    .seed(a.seed)
    .output(&ensemble_path)
    .output(&stream)
    .output(&hist_path)
    .output(&sidecar_path(&hist_path))
    .output(&fit_path)
    .summary(format!(
        "{clicks} clicks; m = {:.3} ± {:.3} (true {:.3}), T1 = {:.3} ± {:.3} ns, g2(0) = {:.3}",
        fit.params.n_molecules_m,
        fit.std_errors.n_molecules_m,
        m_true.unwrap_or(f64::NAN),
        fit.params.t1_ns,
        fit.std_errors.t1_ns,
        fit.derived["g2_zero"].value
    )))
}

/// Writes `intensity,rate,sigma` rows for the saturation recipe.
pub fn write_saturation_csv(path: &Path, seed: u64) -> Result<()> {
    let points = synthetic_saturation(
        &SATURATION_TRUTH,
        &saturation_intensities(),
        SATURATION_NOISE,
        seed,
    )?;
    write_rows(
        path,
        &["intensity_kw_cm2", "rate_kcps", "sigma_kcps"],
        points.iter().map(|p| vec![p.intensity, p.rate, p.sigma]),
    )
}

fn fig8(a: &ReproduceArgs, dir: &Path) -> Result<Outcome> {
    let csv_path = dir.join("saturation.csv");
    write_saturation_csv(&csv_path, a.seed)?;
    let points = synthetic_saturation(
        &SATURATION_TRUTH,
        &saturation_intensities(),
        SATURATION_NOISE,
        a.seed,
    )?;
    let fit = fit_saturation(&points)?;
    let fit_path = dir.join("fit.json");
    write_json(&fit_path, &fit)?;
    Ok(Outcome::new(
        vec!["reproduce", "fig8"],
        json!({
            "truth": SATURATION_TRUTH,
            "intensities": saturation_intensities(),
            "relative_noise": SATURATION_NOISE,
        }),
    )
    .seed(a.seed)
    .output(&csv_path)
    .output(&fit_path)
    .summary(format!(
        "I_sat = {:.2} ± {:.2} kW/cm², R_max = {:.1} ± {:.1} kC/s",
        fit.params.i_sat, fit.std_errors.i_sat, fit.params.r_max, fit.std_errors.r_max
    )))
}

fn fig6(a: &ReproduceArgs, dir: &Path) -> Result<Outcome> {
    let cfg = BatchConfig {
        seed: a.seed,
        ..BatchConfig::default()
    };
    let batch = polarization_batch(&cfg)?;
    let batch_path = dir.join("batch.json");
    write_json(&batch_path, &batch)?;
    let devs: Vec<f64> = batch.molecules.iter().map(|m| m.deviation_deg).collect();
    let hist_path = dir.join("spread.csv");
    write_rows(
        &hist_path,
        &["deviation_bin_start_deg", "molecules"],
        spread_histogram(&devs, 2.0)
            .into_iter()
            .map(|(lo, n)| vec![lo, n as f64]),
    )?;
    let within = devs.iter().filter(|d| d.abs() <= 10.0).count();
    Ok(
        Outcome::new(vec!["reproduce", "fig6"], json!({ "batch": cfg }))
            .seed(a.seed)
            .output(&batch_path)
            .output(&hist_path)
            .summary(format!(
                "{} of {} planted molecules fitted; {within} within ±10° of their crystal mean",
                batch.molecules.len(),
                batch.n_planted
            )),
    )
}

fn fig9(a: &ReproduceArgs, dir: &Path) -> Result<Outcome> {
    let excitation = ExcitationConfig::Cw {
        intensity: 10.0,
        i_sat: SATURATION_TRUTH.i_sat,
    };
    let t1 = 4.23;
    let uniform = bleaching_population(&[(36, 5.7)], &excitation, t1);
    let grid: Vec<f64> = (0..=30).map(f64::from).collect();
    let seed_uniform = a.seed;
    let seed_mixed = a.seed.wrapping_add(1);
    let curve = simulate_bleaching_survival(&uniform, &excitation, &grid, seed_uniform)?;
    let fit_uniform = fit_survival(&curve, SurvivalVariant::SingleExponential)?;
    let uniform_path = dir.join("survival-uniform.csv");
    write_rows(
        &uniform_path,
        &["time_s", "survivors"],
        curve
            .times_s
            .iter()
            .zip(&curve.survivors)
            .map(|(t, n)| vec![*t, *n]),
    )?;
    let uniform_fit_path = dir.join("fit-uniform.json");
    write_json(&uniform_fit_path, &fit_uniform)?;

    let mixed = bleaching_population(
        &[(15, 5.7), (31, 1e3), (30, f64::INFINITY)],
        &excitation,
        t1,
    );
    let curve = simulate_bleaching_survival(&mixed, &excitation, &MIXED_CHECKPOINTS, seed_mixed)?;
    let formula = SurvivalModel::BiexponentialPlusConstant {
        n1: 15.0,
        tau1_s: 5.7,
        n2: 31.0,
        tau2_s: 1e3,
        c: 30.0,
    };
    let mixed_path = dir.join("survival-mixed.csv");
    write_rows(
        &mixed_path,
        &["time_s", "survivors", "formula"],
        curve
            .times_s
            .iter()
            .zip(&curve.survivors)
            .map(|(t, n)| vec![*t, *n, eval_survival(*t, &formula)]),
    )?;
    let mixed_fit_path = dir.join("fit-mixed.json");
    let mixed_summary = match fit_survival(&curve, SurvivalVariant::BiexponentialPlusConstant) {
        Ok(f) => {
            write_json(&mixed_fit_path, &f)?;
            serde_json::to_string(&f.params)?
        }
        Err(e) => {
            write_json(
                &mixed_fit_path,
                &json!({ "error": e.kind(), "message": e.to_string() }),
            )?;
            format!("fit failed: {e}")
        }
    };
    let tau = match fit_uniform.params {
        SurvivalModel::SingleExponential { tau_s, .. } => tau_s,
        _ => f64::NAN,
    };
    Ok(Outcome::new(
        vec!["reproduce", "fig9"],
        json!({
            "excitation": excitation,
            "t1_ns": t1,
            "uniform": { "groups": [[36, 5.7]], "checkpoints_s": grid, "seed": seed_uniform },
            "mixed": {
                "groups": [[15, 5.7], [31, 1e3], [30, "stable"]],
                "checkpoints_s": MIXED_CHECKPOINTS,
                "seed": seed_mixed,
            },
        }),
    )
    .seed(seed_uniform)
    .seed(seed_mixed)
    .output(&uniform_path)
    .output(&uniform_fit_path)
    .output(&mixed_path)
    .output(&mixed_fit_path)
    .summary(format!(
        "uniform lifetime {tau:.2} s; mixed fit {mixed_summary}"
    )))
}

fn sec2_thermo(dir: &Path) -> Result<Outcome> {
    let measured = Estimate::new(410.0, 20.0);
    let sigma = extract_sigma(measured, ANTHRACENE_AB, ANTHRACENE_GAMMA_001);
    let sigma_path = dir.join("sigma.json");
    write_json(
        &sigma_path,
        &json!({
            "critical_delta_mu_mev": measured,
            "unit_cell_ab_a2": ANTHRACENE_AB,
            "gamma_001_mev_per_a2": ANTHRACENE_GAMMA_001,
            "sigma_mev_per_a2": sigma,
        }),
    )?;
    let temps = temperature_range("130C:260C:1C")?;
    let mut outputs: Vec<PathBuf> = vec![sigma_path];
    let mut crossovers = serde_json::Map::new();
    for name in PRESET_NAMES {
        let corr: VaporPressureCorrelation = name.parse()?;
        let s = ThermoScenario::new(temps[0], corr).with_sigma(sigma.value);
        let rows = sweep(&s, &temps)?;
        let path = dir.join(format!("sweep-{name}.csv"));
        write_sweep_csv(&path, &rows)?;
        outputs.push(path);
        let x = crossover_temperature(&s, celsius_to_kelvin(130.0), celsius_to_kelvin(260.0))?;
        crossovers.insert(name.to_owned(), json!(x.map(kelvin_to_celsius)));
    }
    let summary_path = dir.join("crossover.json");
    write_json(&summary_path, &crossovers)?;
    outputs.push(summary_path);
    let mut o = Outcome::new(
        vec!["reproduce", "sec2-thermo"],
        json!({ "t_bottom_k": temps, "sigma": sigma }),
    )
    .summary(format!(
        "σ = {:.2} ± {:.2} meV/Å²; crossover °C {}",
        sigma.value,
        sigma.error,
        serde_json::Value::Object(crossovers)
    ));
    o.outputs = outputs;
    Ok(o)
}
