//! Photobleaching survival curves.
//!
//! Lifetimes are fitted as rates `k = 1/τ ≥ 0` so that a flat curve
//! converges to `k = 0`, reported as `τ = ∞`.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, CurveFit, CurveModel, FitResult, LmOptions};
use crate::sim::SurvivalCurve;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurvivalVariant {
    SingleExponential,
    BiexponentialPlusConstant,
}

impl FromStr for SurvivalVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" | "exp" | "single-exp" | "single_exponential" => {
                Ok(SurvivalVariant::SingleExponential)
            }
            "biexp-const" | "biexp" | "biexponential_plus_constant" => {
                Ok(SurvivalVariant::BiexponentialPlusConstant)
            }
            other => Err(Error::InvalidConfig(format!(
                "unknown survival model {other:?}"
            ))),
        }
    }
}

/// `N₀·e^(−t/τ)` or `N₁·e^(−t/τ₁) + N₂·e^(−t/τ₂) + C`, times in s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum SurvivalModel {
    SingleExponential {
        n0: f64,
        tau_s: f64,
    },
    BiexponentialPlusConstant {
        n1: f64,
        tau1_s: f64,
        n2: f64,
        tau2_s: f64,
        c: f64,
    },
}

impl SurvivalModel {
    pub fn variant(&self) -> SurvivalVariant {
        match self {
            SurvivalModel::SingleExponential { .. } => SurvivalVariant::SingleExponential,
            SurvivalModel::BiexponentialPlusConstant { .. } => {
                SurvivalVariant::BiexponentialPlusConstant
            }
        }
    }

    /// Parameters in fitting form, lifetimes replaced by rates.
    fn to_rates(self) -> Vec<f64> {
        let k = |tau: f64| if tau.is_infinite() { 0.0 } else { 1.0 / tau };
        match self {
            SurvivalModel::SingleExponential { n0, tau_s } => vec![n0, k(tau_s)],
            SurvivalModel::BiexponentialPlusConstant {
                n1,
                tau1_s,
                n2,
                tau2_s,
                c,
            } => {
                vec![n1, k(tau1_s), n2, k(tau2_s), c]
            }
        }
    }
}

pub fn eval_survival(t_s: f64, model: &SurvivalModel) -> f64 {
    match *model {
        SurvivalModel::SingleExponential { n0, tau_s } => n0 * (-t_s / tau_s).exp(),
        SurvivalModel::BiexponentialPlusConstant {
            n1,
            tau1_s,
            n2,
            tau2_s,
            c,
        } => n1 * (-t_s / tau1_s).exp() + n2 * (-t_s / tau2_s).exp() + c,
    }
}

/// `CurveModel` over `[N₀, k]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SingleExpModel;

impl CurveModel for SingleExpModel {
    fn n_params(&self) -> usize {
        2
    }

    fn eval(&self, t: f64, p: &[f64]) -> f64 {
        p[0] * (-p[1] * t).exp()
    }

    fn gradient(&self, t: f64, p: &[f64], g: &mut [f64]) {
        let e = (-p[1] * t).exp();
        g[0] = e;
        g[1] = -p[0] * t * e;
    }

    fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        Some((vec![0.0; 2], vec![f64::INFINITY; 2]))
    }
}

/// `CurveModel` over `[N₁, k₁, N₂, k₂, C]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct BiexpConstModel;

impl CurveModel for BiexpConstModel {
    fn n_params(&self) -> usize {
        5
    }

    fn eval(&self, t: f64, p: &[f64]) -> f64 {
        p[0] * (-p[1] * t).exp() + p[2] * (-p[3] * t).exp() + p[4]
    }

    fn gradient(&self, t: f64, p: &[f64], g: &mut [f64]) {
        let e1 = (-p[1] * t).exp();
        let e2 = (-p[3] * t).exp();
        g[0] = e1;
        g[1] = -p[0] * t * e1;
        g[2] = e2;
        g[3] = -p[2] * t * e2;
        g[4] = 1.0;
    }

    fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        Some((vec![0.0; 5], vec![f64::INFINITY; 5]))
    }
}

pub fn fit_survival(
    curve: &SurvivalCurve,
    variant: SurvivalVariant,
) -> Result<FitResult<SurvivalModel>> {
    fit_survival_with(curve, variant, None, &LmOptions::default())
}

/// Unweighted least squares on counts; errors scaled by the reduced χ².
pub fn fit_survival_with(
    curve: &SurvivalCurve,
    variant: SurvivalVariant,
    init: Option<SurvivalModel>,
    lm: &LmOptions,
) -> Result<FitResult<SurvivalModel>> {
    let (t, y) = (&curve.times_s, &curve.survivors);
    if t.len() < 3 {
        return Err(Error::DegenerateData(format!(
            "need at least 3 checkpoints, got {}",
            t.len()
        )));
    }
    if t.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig(
            "non-finite checkpoint or count".into(),
        ));
    }
    let mut diagnostics = Vec::new();
    if y.windows(2).any(|w| w[1] > w[0]) {
        diagnostics.push("survivor counts increase between checkpoints".into());
    }
    if let Some(m) = init {
        if m.variant() != variant {
            return Err(Error::InvalidConfig(
                "initial model does not match the requested variant".into(),
            ));
        }
    }
    let t_max = t.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let sigma = vec![1.0; t.len()];
    let lm = LmOptions {
        absolute_sigma: false,
        ..lm.clone()
    };
    let result = match variant {
        SurvivalVariant::SingleExponential => {
            let start = init
                .map(SurvivalModel::to_rates)
                .unwrap_or_else(|| single_guess(t, y));
            let problem = CurveFit {
                model: &SingleExpModel,
                x: t,
                y,
                sigma: &sigma,
            };
            let r = levenberg_marquardt(&problem, &start, &lm)?;
            let (n0, k) = (r.params[0], r.params[1]);
            let (tau, tau_err) = lifetime(k, r.std_errors[1], t_max);
            let params = SurvivalModel::SingleExponential { n0, tau_s: tau };
            let errors = SurvivalModel::SingleExponential {
                n0: r.std_errors[0],
                tau_s: tau_err,
            };
            let mut fit = FitResult::from_report(
                "survival_single_exponential",
                params,
                errors,
                &["n0", "rate_per_s"],
                &r,
            );
            if k <= 3.0 * r.std_errors[1] || tau.is_infinite() {
                fit.diagnostics
                    .push("tau non-identifiable: decay rate is consistent with zero".into());
            }
            fit
        }
        SurvivalVariant::BiexponentialPlusConstant => {
            if t.len() < 5 {
                diagnostics.push(format!(
                    "underdetermined: {} checkpoints for 5 parameters",
                    t.len()
                ));
            }
            let start = init
                .map(SurvivalModel::to_rates)
                .unwrap_or_else(|| biexp_guess(t, y));
            let problem = CurveFit {
                model: &BiexpConstModel,
                x: t,
                y,
                sigma: &sigma,
            };
            let r = levenberg_marquardt(&problem, &start, &lm)?;
            let mut p = r.params.clone();
            let mut e = r.std_errors.clone();
            // Order components by lifetime: τ₁ ≤ τ₂.
            if p[1] < p[3] {
                p.swap(0, 2);
                p.swap(1, 3);
                e.swap(0, 2);
                e.swap(1, 3);
            }
            let (tau1, tau1_err) = lifetime(p[1], e[1], t_max);
            let (tau2, tau2_err) = lifetime(p[3], e[3], t_max);
            let params = SurvivalModel::BiexponentialPlusConstant {
                n1: p[0],
                tau1_s: tau1,
                n2: p[2],
                tau2_s: tau2,
                c: p[4],
            };
            let errors = SurvivalModel::BiexponentialPlusConstant {
                n1: e[0],
                tau1_s: tau1_err,
                n2: e[2],
                tau2_s: tau2_err,
                c: e[4],
            };
            let mut fit = FitResult::from_report(
                "survival_biexponential_plus_constant",
                params,
                errors,
                &["n1", "rate1_per_s", "n2", "rate2_per_s", "c"],
                &r,
            );
            if tau2.is_infinite() {
                fit.diagnostics
                    .push("tau2 non-identifiable: decay rate is zero".into());
            }
            fit
        }
    };
    let mut result = result;
    result.diagnostics.extend(diagnostics);
    Ok(result)
}

/// Rates below `1e-12/t_max` are indistinguishable from zero over the data.
fn lifetime(k: f64, k_err: f64, t_max: f64) -> (f64, f64) {
    if k * t_max > 1e-12 {
        (1.0 / k, k_err / (k * k))
    } else {
        (f64::INFINITY, f64::INFINITY)
    }
}

fn single_guess(t: &[f64], y: &[f64]) -> Vec<f64> {
    let (lt, ly): (Vec<f64>, Vec<f64>) = t
        .iter()
        .zip(y)
        .filter(|(_, v)| **v > 0.0)
        .map(|(a, b)| (*a, b.ln()))
        .unzip();
    match super::linear_regression(&lt, &ly) {
        Some((a, b)) => vec![a.exp(), (-b).max(0.0)],
        None => vec![y.iter().cloned().fold(0.0, f64::max), 0.0],
    }
}

/// Variable projection on a log grid of rates: amplitudes by linear least
/// squares, keeping the best non-negative combination.
fn biexp_guess(t: &[f64], y: &[f64]) -> Vec<f64> {
    let t_max = t.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let t_min = t
        .iter()
        .cloned()
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min)
        .min(t_max);
    let (lo, hi) = ((0.1 * t_min).ln(), (10.0 * t_max).ln());
    let grid: Vec<f64> = (0..48)
        .map(|i| (lo + (hi - lo) * i as f64 / 47.0).exp())
        .collect();
    let rhs = DVector::from_column_slice(y);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for (i, &tau1) in grid.iter().enumerate() {
        for &tau2 in &grid[i + 1..] {
            let a = DMatrix::from_fn(t.len(), 3, |r, c| match c {
                0 => (-t[r] / tau1).exp(),
                1 => (-t[r] / tau2).exp(),
                _ => 1.0,
            });
            let Ok(coef) = a.clone().svd(true, true).solve(&rhs, 1e-12) else {
                continue;
            };
            if coef.iter().any(|c| *c < 0.0) {
                continue;
            }
            let sse = (a * &coef - &rhs).norm_squared();
            if best.as_ref().map_or(true, |(s, _)| sse < *s) {
                best = Some((sse, vec![coef[0], 1.0 / tau1, coef[1], 1.0 / tau2, coef[2]]));
            }
        }
    }
    best.map(|b| b.1).unwrap_or_else(|| {
        let top = y.iter().cloned().fold(0.0, f64::max);
        vec![top / 3.0, 1.0 / t_min, top / 3.0, 1.0 / t_max, top / 3.0]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_exponential_recovery() {
        let t: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let y: Vec<f64> = t.iter().map(|s| 36.0 * (-s / 5.7).exp()).collect();
        let fit = fit_survival(
            &SurvivalCurve::new(t, y).unwrap(),
            SurvivalVariant::SingleExponential,
        )
        .unwrap();
        let SurvivalModel::SingleExponential { n0, tau_s } = fit.params else {
            panic!()
        };
        assert!((n0 - 36.0).abs() < 1e-6 && (tau_s - 5.7).abs() < 1e-6);
    }

    #[test]
    fn constant_curve_gives_infinite_lifetime() {
        let curve = SurvivalCurve::new(vec![0.0, 10.0, 20.0, 30.0], vec![30.0; 4]).unwrap();
        let fit = fit_survival(&curve, SurvivalVariant::SingleExponential).unwrap();
        let SurvivalModel::SingleExponential { tau_s, .. } = fit.params else {
            panic!()
        };
        assert!(tau_s.is_infinite());
        assert!(fit.is_flagged("tau non-identifiable"));
    }

    #[test]
    fn too_few_points() {
        let curve = SurvivalCurve::new(vec![0.0, 1.0], vec![2.0, 1.0]).unwrap();
        assert!(fit_survival(&curve, SurvivalVariant::SingleExponential).is_err());
    }
}
