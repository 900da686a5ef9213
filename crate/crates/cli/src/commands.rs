use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use photostat::correlator::sidecar_path;
use photostat::fit::LmOptions;
use photostat::imaging::{
    detect_spots, expected_scan, extract_polarization_series, read_image_csv, render_scan,
    write_image_csv, EmitterLayout, ScanConfig, SpotDetection,
};
use photostat::models::{
    fit_g2_with, fit_polarization_with, fit_saturation_with, fit_survival_with, G2FitOptions,
    PolarizationParams, SaturationPoint,
};
use photostat::pipeline::{correlate_file, simulate_to_file};
use photostat::sim::{EmitterEnsemble, SurvivalCurve};
use photostat::thermo::{
    crossover_temperature, sweep, thermo_report, SweepRow, ThermoScenario, VaporPressureCorrelation,
};
use photostat::units::kelvin_to_celsius;
use photostat::{CorrelationHistogram, DelayBins, Error, FitResult, Result, TagFormat};
use serde::Serialize;
use serde_json::json;

use crate::args::*;
use crate::manifest::Outcome;
use crate::util::{
    angle_range, beside, read_columns, read_json, require_input, resolve_out, temperature_range,
    write_json,
};

const MANIFEST: &str = "manifest.json";

fn lm(max_iter: usize) -> LmOptions {
    LmOptions {
        max_iterations: max_iter,
        ..LmOptions::default()
    }
}

fn tag_format(explicit: Option<Format>, path: &Path) -> TagFormat {
    explicit.map_or_else(|| TagFormat::from_path(path), Into::into)
}

pub fn simulate(a: &SimulateArgs) -> Result<Outcome> {
    let mut ensemble: EmitterEnsemble = read_json(&a.config)?;
    if let Some(seed) = a.seed {
        ensemble.seed = seed;
    }
    let out = resolve_out(&a.out)?;
    let format = tag_format(a.format, &out);
    let n = simulate_to_file(&ensemble, &out, format)?;
    Ok(Outcome::new(
        vec!["simulate"],
        json!({ "ensemble": ensemble, "format": format }),
    )
    .seed(ensemble.seed)
    .input(&a.config)
    .output(&out)
    .manifest_at(beside(&out, MANIFEST))
    .summary(format!("wrote {n} clicks to {}", out.display())))
}

pub fn correlate(a: &CorrelateArgs) -> Result<Outcome> {
    let format = tag_format(a.format, &a.input);
    let bins = DelayBins::symmetric(a.window_ns * 1e3, a.bin_ps)?;
    let hist = correlate_file(require_input(&a.input)?, format, bins)?;
    let out = resolve_out(&a.out)?;
    hist.write_csv(&out)?;
    Ok(
        Outcome::new(vec!["correlate"], json!({ "format": format, "bins": bins }))
            .input(&a.input)
            .output(&out)
            .output(&sidecar_path(&out))
            .manifest_at(beside(&out, MANIFEST))
            .summary(format!(
                "{} bins, {} coincidences from {} + {} clicks → {}",
                hist.len(),
                hist.total(),
                hist.total_starts,
                hist.total_stops,
                out.display()
            )),
    )
}

fn write_fit<P: Serialize>(
    out: &Path,
    command: &'static str,
    config: serde_json::Value,
    input: &Path,
    fit: &FitResult<P>,
    summary: String,
) -> Result<Outcome> {
    let out = resolve_out(out)?;
    write_json(&out, fit)?;
    for d in &fit.diagnostics {
        log::warn!("{d}");
    }
    Ok(Outcome::new(vec!["fit", command], config)
        .input(input)
        .output(&out)
        .manifest_at(beside(&out, MANIFEST))
        .summary(summary))
}

pub fn fit(cmd: &FitCommand) -> Result<Outcome> {
    match cmd {
        FitCommand::G2(a) => {
            let hist = CorrelationHistogram::read_csv(require_input(&a.hist)?)?;
            let opts = G2FitOptions {
                float_period: a.float_period,
                lm: lm(a.max_iter),
                ..G2FitOptions::new(a.pulse_ns)
            };
            let fit = fit_g2_with(&hist, &opts)?;
            let p = &fit.params;
            let g0 = fit.derived.get("g2_zero").copied();
            let summary = format!(
                "m = {:.4} ± {:.4}, T1 = {:.4} ± {:.4} ns, g2(0) = {:.4}",
                p.n_molecules_m,
                fit.std_errors.n_molecules_m,
                p.t1_ns,
                fit.std_errors.t1_ns,
                g0.map_or(f64::NAN, |e| e.value)
            );
            let config = json!({
                "pulse_period_ns": a.pulse_ns,
                "float_period": a.float_period,
                "max_iterations": a.max_iter,
            });
            write_fit(&a.out, "g2", config, &a.hist, &fit, summary)
        }
        FitCommand::Saturation(a) => {
            let points: Vec<SaturationPoint> = read_columns(&a.points, 2, 3)?
                .into_iter()
                .map(|r| {
                    let (i, rate) = (r[0].unwrap(), r[1].unwrap());
                    SaturationPoint::new(i, rate, r[2].unwrap_or(a.rel_sigma * rate.abs()))
                })
                .collect();
            let fit = fit_saturation_with(&points, None, &lm(a.max_iter))?;
            let summary = format!(
                "I_sat = {:.3} ± {:.3}, R_max = {:.4} ± {:.4}",
                fit.params.i_sat, fit.std_errors.i_sat, fit.params.r_max, fit.std_errors.r_max
            );
            let config = json!({ "rel_sigma_default": a.rel_sigma, "max_iterations": a.max_iter });
            write_fit(&a.out, "saturation", config, &a.points, &fit, summary)
        }
        FitCommand::Polarization(a) => {
            let points: Vec<(f64, f64)> = read_columns(&a.points, 2, 2)?
                .into_iter()
                .map(|r| (r[0].unwrap(), r[1].unwrap()))
                .collect();
            let fit = fit_polarization_with(&points, None, &lm(a.max_iter))?;
            let summary = format!(
                "dipole angle {:.2}°, visibility {:.3}",
                fit.params.dipole_angle_deg(),
                fit.params.visibility()
            );
            let config = json!({ "max_iterations": a.max_iter });
            write_fit(&a.out, "polarization", config, &a.points, &fit, summary)
        }
        FitCommand::Survival(a) => {
            let rows = read_columns(&a.curve, 2, 2)?;
            let curve = SurvivalCurve::new(
                rows.iter().map(|r| r[0].unwrap()).collect(),
                rows.iter().map(|r| r[1].unwrap()).collect(),
            )?;
            let fit = fit_survival_with(&curve, a.model, None, &lm(a.max_iter))?;
            let summary = format!("{}: {}", fit.model, serde_json::to_string(&fit.params)?);
            let config = json!({ "model": fit.model, "max_iterations": a.max_iter });
            write_fit(&a.out, "survival", config, &a.curve, &fit, summary)
        }
    }
}

/// A preset name, or else a JSON file holding a correlation.
pub fn load_correlation(s: &str) -> Result<VaporPressureCorrelation> {
    match s.parse::<VaporPressureCorrelation>() {
        Ok(c) => Ok(c),
        Err(e) if !Path::new(s).exists() => Err(e),
        Err(_) => {
            let c: VaporPressureCorrelation = read_json(Path::new(s))?;
            c.validate()?;
            Ok(c)
        }
    }
}

fn scenario(tb: f64, common: &ThermoCommon) -> Result<ThermoScenario> {
    let mut s = ThermoScenario::new(tb, load_correlation(&common.correlation)?);
    s.t_top_k = common.tt.0;
    s.sigma_substrate = common.sigma;
    s.validate()?;
    Ok(s)
}

#[derive(Serialize)]
struct SweepCsvRow {
    t_bottom_k: f64,
    t_bottom_c: f64,
    pressure_ratio: f64,
    delta_mu_mev: f64,
    morphology: Option<&'static str>,
}

/// One row per bottom temperature; `morphology` is empty without σ.
pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for r in rows {
        w.serialize(SweepCsvRow {
            t_bottom_k: r.t_bottom_k,
            t_bottom_c: r.t_bottom_c,
            pressure_ratio: r.pressure_ratio,
            delta_mu_mev: r.delta_mu,
            morphology: r.morphology.map(|m| m.as_str()),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn thermo(cmd: &ThermoCommand) -> Result<Outcome> {
    match cmd {
        ThermoCommand::Report(a) => {
            let s = scenario(a.tb.0, &a.common)?;
            let report = thermo_report(&s)?;
            let out = resolve_out(&a.out)?;
            write_json(&out, &report)?;
            for flag in &report.out_of_range_flags {
                log::warn!("{flag}");
            }
            let morph = report
                .predicted_morphology
                .map_or("n/a (no --sigma)", |m| m.as_str());
            Ok(
                Outcome::new(vec!["thermo", "report"], json!({ "scenario": s }))
                    .output(&out)
                    .manifest_at(beside(&out, MANIFEST))
                    .summary(format!(
                        "Δμ = {:.2} meV, pressure ratio {:.3e}, morphology {morph}",
                        report.delta_mu, report.pressure_ratio
                    )),
            )
        }
        ThermoCommand::Sweep(a) => {
            let temps = temperature_range(&a.tb_range)?;
            let first = temps
                .first()
                .copied()
                .ok_or_else(|| Error::InvalidConfig(format!("range {:?} is empty", a.tb_range)))?;
            let s = scenario(first, &a.common)?;
            let rows = sweep(&s, &temps)?;
            let out = resolve_out(&a.out)?;
            write_sweep_csv(&out, &rows)?;
            let last = *temps.last().unwrap();
            let crossover = match s.sigma_substrate {
                Some(_) => crossover_temperature(&s, first, last)?,
                None => None,
            };
            let summary = match crossover {
                Some(k) => format!(
                    "{} rows; mesa/needle crossover at {:.2} °C",
                    rows.len(),
                    kelvin_to_celsius(k)
                ),
                None => format!("{} rows; no crossover in range", rows.len()),
            };
            Ok(Outcome::new(
                vec!["thermo", "sweep"],
                json!({ "scenario": s, "t_bottom_k": temps, "crossover_k": crossover }),
            )
            .output(&out)
            .manifest_at(beside(&out, MANIFEST))
            .summary(summary))
        }
    }
}

struct Scene {
    config: ScanConfig,
    layout: EmitterLayout,
    inputs: Vec<std::path::PathBuf>,
}

fn scene(a: &SceneArgs) -> Result<Scene> {
    let mut inputs = Vec::new();
    let mut config = match &a.config {
        Some(p) => {
            inputs.push(p.clone());
            read_json(p)?
        }
        None => ScanConfig::default(),
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    config.validate()?;
    let layout = match &a.layout {
        Some(p) => {
            inputs.push(p.clone());
            read_json(p)?
        }
        None => EmitterLayout::random(&config, a.density, config.seed),
    };
    let outside = layout.out_of_field(&config);
    if !outside.is_empty() {
        log::warn!("{} emitter(s) lie outside the field", outside.len());
    }
    Ok(Scene {
        config,
        layout,
        inputs,
    })
}

#[derive(Serialize)]
struct SpotFit {
    spot: usize,
    detection: SpotDetection,
    lost: bool,
    fit: Option<FitResult<PolarizationParams>>,
    error: Option<String>,
}

#[derive(Serialize)]
struct SeriesCsvRow {
    spot: usize,
    x_um: f64,
    y_um: f64,
    isolated: bool,
    lost: bool,
    angle_deg: f64,
    signal: f64,
    raw_signal: f64,
}

pub fn scan(cmd: &ScanCommand) -> Result<Outcome> {
    match cmd {
        ScanCommand::Render(a) => {
            let mut sc = scene(&a.scene)?;
            if let Some(angle) = a.polarizer_deg {
                sc.config.polarizer_angle_deg = angle;
            }
            let image = if a.expected {
                expected_scan(&sc.layout, &sc.config)?
            } else {
                render_scan(&sc.layout, &sc.config)?
            };
            let out = resolve_out(&a.out)?;
            write_image_csv(&out, &image, &sc.config)?;
            let mut o = Outcome::new(
                vec!["scan", "render"],
                json!({ "config": sc.config, "layout": sc.layout, "expected": a.expected }),
            )
            .seed(sc.config.seed)
            .output(&out)
            .output(&sidecar_path(&out))
            .manifest_at(beside(&out, MANIFEST))
            .summary(format!(
                "{} emitters, {}×{} image → {}",
                sc.layout.emitters.len(),
                image.ncols(),
                image.nrows(),
                out.display()
            ));
            o.inputs = sc.inputs;
            Ok(o)
        }
        ScanCommand::Detect(a) => {
            let (image, sidecar) = read_image_csv(require_input(&a.image)?)?;
            let config = match (&a.config, sidecar) {
                (Some(p), _) => read_json(p)?,
                (None, Some(s)) => s.config,
                (None, None) => {
                    return Err(Error::InvalidConfig(
                        "image has no geometry sidecar; pass --config".into(),
                    ))
                }
            };
            let spots = detect_spots(&image, &config, a.threshold);
            let out = resolve_out(&a.out)?;
            write_json(&out, &spots)?;
            let mut o = Outcome::new(
                vec!["scan", "detect"],
                json!({ "config": config, "threshold_sigma": a.threshold }),
            )
            .input(&a.image)
            .output(&out)
            .manifest_at(beside(&out, MANIFEST))
            .summary(format!(
                "{} spots ({} isolated)",
                spots.len(),
                spots.iter().filter(|s| s.isolated).count()
            ));
            if let Some(p) = &a.config {
                o = o.input(p);
            }
            Ok(o)
        }
        ScanCommand::Polarize(a) => {
            let sc = scene(&a.scene)?;
            let angles = angle_range(&a.angles)?;
            let frames = angles
                .iter()
                .map(|&t| Ok((t, render_scan(&sc.layout, &sc.config.with_polarizer(t))?)))
                .collect::<Result<Vec<_>>>()?;
            let mut total = Array2::<f64>::zeros(sc.config.shape());
            for (_, f) in &frames {
                total += f;
            }
            let spots = detect_spots(&total, &sc.config, a.threshold);
            let series = extract_polarization_series(&frames, &spots, &sc.config)?;

            let out = resolve_out(&a.out)?;
            let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&out)?));
            let mut fits = Vec::new();
            for (k, s) in series.iter().enumerate() {
                for (&(angle, signal), &raw) in s.series.iter().zip(&s.raw_signal) {
                    w.serialize(SeriesCsvRow {
                        spot: k,
                        x_um: s.spot.centroid_um.0,
                        y_um: s.spot.centroid_um.1,
                        isolated: s.spot.isolated,
                        lost: s.lost,
                        angle_deg: angle,
                        signal,
                        raw_signal: raw,
                    })?;
                }
                let (fit, error) = if s.lost {
                    (None, Some("spot lost at every angle".to_owned()))
                } else {
                    match fit_polarization_with(&s.series, None, &LmOptions::default()) {
                        Ok(f) => (Some(f), None),
                        Err(e) => (None, Some(e.to_string())),
                    }
                };
                fits.push(SpotFit {
                    spot: k,
                    detection: s.spot,
                    lost: s.lost,
                    fit,
                    error,
                });
            }
            w.flush()?;
            let fits_path = beside(&out, "fits.json");
            write_json(&fits_path, &fits)?;
            let fitted = fits.iter().filter(|f| f.fit.is_some()).count();
            let mut o = Outcome::new(
                vec!["scan", "polarize"],
                json!({
                    "config": sc.config,
                    "layout": sc.layout,
                    "angles_deg": angles,
                    "threshold_sigma": a.threshold,
                }),
            )
            .seed(sc.config.seed)
            .output(&out)
            .output(&fits_path)
            .manifest_at(beside(&out, MANIFEST))
            .summary(format!(
                "{} spots, {fitted} fitted over {} angles",
                spots.len(),
                angles.len()
            ));
            o.inputs = sc.inputs;
            Ok(o)
        }
    }
}

/// Writes rows of plain numbers under `header`.
pub fn write_rows(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}
