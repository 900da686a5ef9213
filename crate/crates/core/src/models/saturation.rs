//! Saturation of the detected count rate: `R(I) = R_max·I/(I + I_sat)`.

use serde::{Deserialize, Serialize};

use super::linear_regression;
use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, CurveFit, CurveModel, FitResult, LmOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationParams {
    /// Saturation intensity, kW/cm².
    pub i_sat: f64,
    /// Count rate at infinite intensity, counts/s.
    pub r_max: f64,
}

/// One measured point: intensity in kW/cm², rate and its σ in counts/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationPoint {
    pub intensity: f64,
    pub rate: f64,
    pub sigma: f64,
}

impl SaturationPoint {
    pub fn new(intensity: f64, rate: f64, sigma: f64) -> Self {
        SaturationPoint {
            intensity,
            rate,
            sigma,
        }
    }
}

pub fn eval_saturation(intensity: f64, p: &SaturationParams) -> f64 {
    if intensity == 0.0 {
        return 0.0;
    }
    p.r_max * intensity / (intensity + p.i_sat)
}

/// `CurveModel` over `[I_sat, R_max]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SaturationModel;

impl CurveModel for SaturationModel {
    fn n_params(&self) -> usize {
        2
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        eval_saturation(
            x,
            &SaturationParams {
                i_sat: p[0],
                r_max: p[1],
            },
        )
    }

    fn gradient(&self, x: f64, p: &[f64], g: &mut [f64]) {
        let d = x + p[0];
        g[0] = -p[1] * x / (d * d);
        g[1] = x / d;
    }

    fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        Some((vec![f64::MIN_POSITIVE, 0.0], vec![f64::INFINITY; 2]))
    }
}

pub fn fit_saturation(points: &[SaturationPoint]) -> Result<FitResult<SaturationParams>> {
    fit_saturation_with(points, None, &LmOptions::default())
}

/// Weighted fit; `σ` of each point is taken as an absolute standard deviation.
/// The default start comes from a Lineweaver–Burk line through `(1/I, 1/R)`.
pub fn fit_saturation_with(
    points: &[SaturationPoint],
    init: Option<SaturationParams>,
    lm: &LmOptions,
) -> Result<FitResult<SaturationParams>> {
    if points
        .iter()
        .any(|p| !(p.sigma > 0.0 && p.sigma.is_finite()))
    {
        return Err(Error::InvalidConfig(
            "every σ_rate must be positive and finite".into(),
        ));
    }
    if points
        .iter()
        .any(|p| p.intensity < 0.0 || !p.intensity.is_finite() || !p.rate.is_finite())
    {
        return Err(Error::InvalidConfig(
            "intensities must be ≥ 0 and rates finite".into(),
        ));
    }
    if points.iter().all(|p| p.rate == 0.0) {
        return Err(Error::DegenerateData("all rates are zero".into()));
    }
    let mut distinct: Vec<f64> = points
        .iter()
        .filter(|p| p.intensity > 0.0)
        .map(|p| p.intensity)
        .collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::DegenerateData(
            "need at least two distinct positive intensities".into(),
        ));
    }
    let mut diagnostics = Vec::new();
    if distinct.len() < 3 {
        diagnostics.push("fewer than 3 distinct intensities".into());
    }
    let start = init.unwrap_or_else(|| initial_guess(points));
    let x: Vec<f64> = points.iter().map(|p| p.intensity).collect();
    let y: Vec<f64> = points.iter().map(|p| p.rate).collect();
    let s: Vec<f64> = points.iter().map(|p| p.sigma).collect();
    let problem = CurveFit {
        model: &SaturationModel,
        x: &x,
        y: &y,
        sigma: &s,
    };
    let report = levenberg_marquardt(
        &problem,
        &[start.i_sat, start.r_max],
        &LmOptions {
            absolute_sigma: true,
            ..lm.clone()
        },
    )?;
    let params = SaturationParams {
        i_sat: report.params[0],
        r_max: report.params[1],
    };
    let errors = SaturationParams {
        i_sat: report.std_errors[0],
        r_max: report.std_errors[1],
    };
    let mut result =
        FitResult::from_report("saturation", params, errors, &["i_sat", "r_max"], &report);
    if distinct[0] >= params.i_sat || distinct[distinct.len() - 1] <= params.i_sat {
        diagnostics.push("intensities do not bracket the fitted I_sat".into());
    }
    result.diagnostics.extend(diagnostics);
    Ok(result)
}

fn initial_guess(points: &[SaturationPoint]) -> SaturationParams {
    let (inv_i, inv_r): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|p| p.intensity > 0.0 && p.rate > 0.0)
        .map(|p| (1.0 / p.intensity, 1.0 / p.rate))
        .unzip();
    if let Some((a, b)) = linear_regression(&inv_i, &inv_r) {
        // 1/R = 1/R_max + (I_sat/R_max)·(1/I)
        if a > 0.0 && b > 0.0 {
            return SaturationParams {
                i_sat: b / a,
                r_max: 1.0 / a,
            };
        }
    }
    let r_top = points.iter().map(|p| p.rate).fold(0.0, f64::max);
    let mut is: Vec<f64> = points.iter().map(|p| p.intensity).collect();
    is.sort_by(f64::total_cmp);
    SaturationParams {
        i_sat: is[is.len() / 2].max(f64::MIN_POSITIVE),
        r_max: 1.5 * r_top,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const REFERENCE: SaturationParams = SaturationParams {
        i_sat: 75.0,
        r_max: 440e3,
    };

    #[test]
    fn identities() {
        assert_eq!(eval_saturation(0.0, &REFERENCE), 0.0);
        assert_eq!(eval_saturation(75.0, &REFERENCE), 220e3);
        let mut prev = 0.0;
        for k in 1..1000 {
            let r = eval_saturation(k as f64, &REFERENCE);
            assert!(r > prev && r < REFERENCE.r_max);
            prev = r;
        }
    }

    #[test]
    fn noiseless_recovery() {
        let pts: Vec<_> = [5.0, 20.0, 50.0, 100.0, 200.0, 400.0]
            .iter()
            .map(|&i| SaturationPoint::new(i, eval_saturation(i, &REFERENCE), 1e3))
            .collect();
        let fit = fit_saturation(&pts).unwrap();
        assert!((fit.params.i_sat / 75.0 - 1.0).abs() < 1e-8);
        assert!((fit.params.r_max / 440e3 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn zero_rates_are_degenerate() {
        let pts: Vec<_> = [1.0, 2.0, 3.0]
            .iter()
            .map(|&i| SaturationPoint::new(i, 0.0, 1.0))
            .collect();
        assert!(matches!(
            fit_saturation(&pts),
            Err(Error::DegenerateData(_))
        ));
    }
}
