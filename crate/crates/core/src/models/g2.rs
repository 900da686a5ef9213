//! Pulsed antibunching train:
//! `C(τ) = B + N·Σₙ (1 − δ₀ₙ/m)·exp(−|τ − nΔt|/T₁)`.
//!
//! The infinite sum is truncated to the peaks `n₀ − n_extra ..= n₀ + 1 + n_extra`
//! around `n₀ = ⌊τ/Δt⌋`, with `n_extra` chosen so the first omitted term on
//! each side is below `10⁻¹⁴` of the nearest retained one.

use std::f64::consts::LN_10;

use serde::{Deserialize, Serialize};

use crate::correlator::CorrelationHistogram;
use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, CurveFit, CurveModel, Estimate, FitResult, LmOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2TrainParams {
    /// Flat background B, counts per bin.
    pub background_b: f64,
    /// Side-peak amplitude N, counts per bin.
    pub amplitude_n: f64,
    /// Effective number of emitters m ≥ 1 (real valued).
    pub n_molecules_m: f64,
    /// Excited-state lifetime T₁, ns.
    pub t1_ns: f64,
    /// Pulse period Δt, ns.
    pub pulse_period_ns: f64,
}

impl G2TrainParams {
    /// `1 − 1/m`, the central peak height relative to a side peak.
    pub fn g2_zero(&self) -> f64 {
        1.0 - 1.0 / self.n_molecules_m
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.background_b >= 0.0
            && self.amplitude_n >= 0.0
            && self.n_molecules_m >= 1.0
            && self.t1_ns > 0.0
            && self.pulse_period_ns > 0.0
            && [
                self.background_b,
                self.amplitude_n,
                self.n_molecules_m,
                self.t1_ns,
                self.pulse_period_ns,
            ]
            .iter()
            .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "invalid g2 parameters {self:?}"
            )))
        }
    }
}

/// Peaks kept on each side of τ, beyond the two nearest.
pub fn truncation_terms(t1_ns: f64, pulse_period_ns: f64) -> usize {
    (14.0 * LN_10 * t1_ns / pulse_period_ns).ceil() as usize + 1
}

pub fn eval_g2_train(tau_ns: f64, p: &G2TrainParams) -> f64 {
    eval_g2_train_terms(tau_ns, p, truncation_terms(p.t1_ns, p.pulse_period_ns))
}

/// The train with an explicit number of extra peaks per side.
pub fn eval_g2_train_terms(tau_ns: f64, p: &G2TrainParams, n_extra: usize) -> f64 {
    let dt = p.pulse_period_ns;
    let n0 = (tau_ns / dt).floor() as i64;
    let extra = n_extra as i64;
    let mut sum = 0.0;
    for n in (n0 - extra)..=(n0 + 1 + extra) {
        let w = if n == 0 {
            1.0 - 1.0 / p.n_molecules_m
        } else {
            1.0
        };
        sum += w * (-(tau_ns - n as f64 * dt).abs() / p.t1_ns).exp();
    }
    p.background_b + p.amplitude_n * sum
}

/// `CurveModel` over `[B, N, m, T₁]`, plus `Δt` when `float_period`.
#[derive(Debug, Clone, Copy)]
pub struct G2Model {
    pub pulse_period_ns: f64,
    pub float_period: bool,
}

impl G2Model {
    fn unpack(&self, p: &[f64]) -> G2TrainParams {
        G2TrainParams {
            background_b: p[0],
            amplitude_n: p[1],
            n_molecules_m: p[2],
            t1_ns: p[3],
            pulse_period_ns: if self.float_period {
                p[4]
            } else {
                self.pulse_period_ns
            },
        }
    }

    fn pack(&self, g: &G2TrainParams) -> Vec<f64> {
        let mut v = vec![g.background_b, g.amplitude_n, g.n_molecules_m, g.t1_ns];
        if self.float_period {
            v.push(g.pulse_period_ns);
        }
        v
    }

    fn names(&self) -> &'static [&'static str] {
        if self.float_period {
            &[
                "background_b",
                "amplitude_n",
                "n_molecules_m",
                "t1_ns",
                "pulse_period_ns",
            ]
        } else {
            &["background_b", "amplitude_n", "n_molecules_m", "t1_ns"]
        }
    }
}

impl CurveModel for G2Model {
    fn n_params(&self) -> usize {
        4 + usize::from(self.float_period)
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        eval_g2_train(x, &self.unpack(p))
    }

    fn gradient(&self, tau: f64, p: &[f64], g: &mut [f64]) {
        let q = self.unpack(p);
        let dt = q.pulse_period_ns;
        let t1 = q.t1_ns;
        let n0 = (tau / dt).floor() as i64;
        let extra = truncation_terms(t1, dt) as i64;
        let (mut s, mut ds_dt1, mut ds_dperiod, mut central) = (0.0, 0.0, 0.0, 0.0);
        for n in (n0 - extra)..=(n0 + 1 + extra) {
            let d = tau - n as f64 * dt;
            let e = (-d.abs() / t1).exp();
            let w = if n == 0 {
                central = e;
                1.0 - 1.0 / q.n_molecules_m
            } else {
                1.0
            };
            s += w * e;
            ds_dt1 += w * e * d.abs() / (t1 * t1);
            // ∂|τ − nΔt|/∂Δt = −n·sign(d)
            ds_dperiod += w * e * n as f64 * d.signum() / t1;
        }
        g[0] = 1.0;
        g[1] = s;
        g[2] = q.amplitude_n * central / (q.n_molecules_m * q.n_molecules_m);
        g[3] = q.amplitude_n * ds_dt1;
        if self.float_period {
            g[4] = q.amplitude_n * ds_dperiod;
        }
    }

    fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let mut lo = vec![0.0, 0.0, 1.0, 1e-6];
        let mut hi = vec![f64::INFINITY; 4];
        if self.float_period {
            lo.push(1e-6);
            hi.push(f64::INFINITY);
        }
        Some((lo, hi))
    }
}

#[derive(Debug, Clone)]
pub struct G2FitOptions {
    pub pulse_period_ns: f64,
    /// Starting point; data-driven when `None`.
    pub init: Option<G2TrainParams>,
    /// Fit Δt as a fifth parameter.
    pub float_period: bool,
    pub lm: LmOptions,
}

impl G2FitOptions {
    pub fn new(pulse_period_ns: f64) -> Self {
        G2FitOptions {
            pulse_period_ns,
            init: None,
            float_period: false,
            lm: LmOptions::default(),
        }
    }
}

/// Fits the train to a measured histogram, evaluating the model at bin centres.
pub fn fit_g2(
    hist: &CorrelationHistogram,
    pulse_period_ns: f64,
    init: Option<G2TrainParams>,
) -> Result<FitResult<G2TrainParams>> {
    fit_g2_with(
        hist,
        &G2FitOptions {
            init,
            ..G2FitOptions::new(pulse_period_ns)
        },
    )
}

pub fn fit_g2_with(
    hist: &CorrelationHistogram,
    options: &G2FitOptions,
) -> Result<FitResult<G2TrainParams>> {
    let counts: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
    fit_g2_points(&hist.centers_ns(), &counts, options)
}

/// Fits `counts` observed at delays `tau_ns` with weights `σ² = max(count, 1)`.
pub fn fit_g2_points(
    tau_ns: &[f64],
    counts: &[f64],
    options: &G2FitOptions,
) -> Result<FitResult<G2TrainParams>> {
    if tau_ns.len() != counts.len() {
        return Err(Error::InvalidConfig(
            "delay and count arrays differ in length".into(),
        ));
    }
    let dt = options.pulse_period_ns;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "pulse period must be > 0, got {dt}"
        )));
    }
    if counts.iter().all(|&c| c == 0.0) {
        return Err(Error::DegenerateData("histogram is all zero".into()));
    }
    let mut diagnostics = Vec::new();
    let (lo, hi) = tau_ns
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| {
            (a.min(t), b.max(t))
        });
    if lo > -3.0 * dt || hi < 3.0 * dt {
        diagnostics.push(format!(
            "window [{lo:.3}, {hi:.3}] ns spans fewer than 3 pulse periods on each side"
        ));
    }
    let init = match options.init {
        Some(p) => G2TrainParams {
            pulse_period_ns: dt,
            ..p
        },
        None => initial_guess(tau_ns, counts, dt),
    };
    let model = G2Model {
        pulse_period_ns: dt,
        float_period: options.float_period,
    };
    let sigma: Vec<f64> = counts.iter().map(|c| c.max(1.0).sqrt()).collect();
    let problem = CurveFit {
        model: &model,
        x: tau_ns,
        y: counts,
        sigma: &sigma,
    };
    let lm = LmOptions {
        absolute_sigma: true,
        ..options.lm.clone()
    };
    let report = levenberg_marquardt(&problem, &model.pack(&init), &lm)?;

    let params = model.unpack(&report.params);
    let mut err = G2TrainParams {
        background_b: report.std_errors[0],
        amplitude_n: report.std_errors[1],
        n_molecules_m: report.std_errors[2],
        t1_ns: report.std_errors[3],
        pulse_period_ns: 0.0,
    };
    if options.float_period {
        err.pulse_period_ns = report.std_errors[4];
    }
    let mut result = FitResult::from_report("g2_train", params, err, model.names(), &report);
    result.diagnostics.extend(diagnostics);
    let m = params.n_molecules_m;
    result.derived.insert(
        "g2_zero".into(),
        Estimate::new(params.g2_zero(), err.n_molecules_m / (m * m)),
    );
    if params.amplitude_n <= 3.0 * err.amplitude_n
        || params.amplitude_n <= 1e-9 * params.background_b.max(1.0)
    {
        result
            .diagnostics
            .push("m unidentifiable: amplitude N is consistent with zero".into());
        result
            .diagnostics
            .push("t1 unidentifiable: amplitude N is consistent with zero".into());
    }
    if params.n_molecules_m <= 1.0 {
        result.diagnostics.push("m at its lower bound 1".into());
    }
    Ok(result)
}

/// Data-driven start: B from the inter-peak floor, N and T₁ from the
/// height and half-maximum width of the n = 1 peak, m from the central
/// to side peak height ratio.
fn initial_guess(tau: &[f64], counts: &[f64], dt: f64) -> G2TrainParams {
    let phase = |t: f64| (t / dt - (t / dt).round()).abs();
    let mut floor: Vec<f64> = tau
        .iter()
        .zip(counts)
        .filter(|(t, _)| phase(**t) > 0.4)
        .map(|(_, c)| *c)
        .collect();
    if floor.is_empty() {
        floor = counts.to_vec();
    }
    floor.sort_by(f64::total_cmp);
    let b = floor[floor.len() / 2].max(0.0);

    let peak_height = |n: f64| -> Option<(f64, Vec<(f64, f64)>)> {
        let bins: Vec<(f64, f64)> = tau
            .iter()
            .zip(counts)
            .filter(|(t, _)| (**t - n * dt).abs() < 0.5 * dt)
            .map(|(t, c)| (*t, *c))
            .collect();
        if bins.is_empty() {
            return None;
        }
        let mut top: Vec<f64> = bins.iter().map(|b| b.1).collect();
        top.sort_by(|a, b| b.total_cmp(a));
        let k = top.len().min(3);
        Some((top[..k].iter().sum::<f64>() / k as f64 - b, bins))
    };
    let side = peak_height(1.0).or_else(|| peak_height(-1.0));
    let (n_amp, t1) = match &side {
        Some((h, bins)) if *h > 0.0 => {
            let above = bins.iter().filter(|(_, c)| c - b > 0.5 * h).count();
            let width = tau
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::INFINITY, f64::min);
            let bin = if width.is_finite() && width > 0.0 {
                width
            } else {
                dt / 100.0
            };
            let fwhm = above.max(1) as f64 * bin;
            (
                *h,
                (fwhm / (2.0 * std::f64::consts::LN_2)).clamp(1e-3 * dt, dt),
            )
        }
        _ => (0.0, 0.2 * dt),
    };
    let m = match peak_height(0.0) {
        Some((hc, _)) if n_amp > 0.0 => {
            let ratio = (hc / n_amp).clamp(0.0, 0.999);
            1.0 / (1.0 - ratio)
        }
        _ => 2.0,
    };
    G2TrainParams {
        background_b: b,
        amplitude_n: n_amp.max(1e-3),
        n_molecules_m: m,
        t1_ns: t1,
        pulse_period_ns: dt,
    }
}

/// Model-independent g²(0): background-subtracted counts within ±Δt/2 of
/// τ = 0 divided by the mean of the same quantity over the side peaks that
/// lie entirely inside the window. `None` when no side peak is complete.
pub fn background_corrected_g2_zero(
    tau_ns: &[f64],
    counts: &[f64],
    background_b: f64,
    pulse_period_ns: f64,
) -> Option<f64> {
    let dt = pulse_period_ns;
    let (lo, hi) = tau_ns
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &t| {
            (a.min(t), b.max(t))
        });
    let area = |n: i64| -> f64 {
        tau_ns
            .iter()
            .zip(counts)
            .filter(|(t, _)| (**t - n as f64 * dt).abs() < 0.5 * dt)
            .map(|(_, c)| c - background_b)
            .sum()
    };
    let mut side = Vec::new();
    let mut n = 1;
    while (n as f64 + 0.5) * dt <= hi && -(n as f64 + 0.5) * dt >= lo {
        side.push(area(n));
        side.push(area(-n));
        n += 1;
    }
    if side.is_empty() {
        return None;
    }
    let mean = side.iter().sum::<f64>() / side.len() as f64;
    (mean > 0.0).then(|| area(0) / mean)
}
