//! Excitation-polarization response of a dipole.
//!
//! The fit works on the raw form `A·cos²(θ + φ) + B`, which is linear in A
//! and B; the normalized curve `(A·cos²(θ + φ) + B)/(A + B)` has unit
//! maximum and is what [`eval_polarization`] returns. Normalization leaves
//! only the ratio A/B identifiable, so fitting it directly would be singular.
//! The dipole lies at `θ = −φ (mod 180°)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, CurveFit, CurveModel, Estimate, FitResult, LmOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarizationParams {
    pub amp_a: f64,
    pub offset_b: f64,
    /// φ in degrees, reported in `[0, 180)`.
    pub phase_phi_deg: f64,
}

impl PolarizationParams {
    /// `(max − min)/(max + min) = A/(A + 2B)`.
    pub fn visibility(&self) -> f64 {
        let d = self.amp_a + 2.0 * self.offset_b;
        if d > 0.0 {
            self.amp_a / d
        } else {
            0.0
        }
    }

    /// Polarizer angle of maximum response, `(−φ) mod 180°`.
    pub fn dipole_angle_deg(&self) -> f64 {
        wrap_180(-self.phase_phi_deg)
    }
}

/// Reduces an angle in degrees to `[0, 180)`.
pub fn wrap_180(deg: f64) -> f64 {
    let w = deg.rem_euclid(180.0);
    if w >= 180.0 {
        0.0
    } else {
        w
    }
}

/// Normalized response with unit maximum; 0 when `A + B = 0`.
pub fn eval_polarization(theta_deg: f64, p: &PolarizationParams) -> f64 {
    let total = p.amp_a + p.offset_b;
    if total == 0.0 {
        return 0.0;
    }
    eval_polarization_raw(theta_deg, p) / total
}

/// `A·cos²(θ + φ) + B`.
pub fn eval_polarization_raw(theta_deg: f64, p: &PolarizationParams) -> f64 {
    let c = (theta_deg + p.phase_phi_deg).to_radians().cos();
    p.amp_a * c * c + p.offset_b
}

/// `CurveModel` over `[A, B, φ°]` for the raw form.
#[derive(Debug, Clone, Copy, Default)]
pub struct PolarizationModel;

impl CurveModel for PolarizationModel {
    fn n_params(&self) -> usize {
        3
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        eval_polarization_raw(
            x,
            &PolarizationParams {
                amp_a: p[0],
                offset_b: p[1],
                phase_phi_deg: p[2],
            },
        )
    }

    fn gradient(&self, x: f64, p: &[f64], g: &mut [f64]) {
        let u = (x + p[2]).to_radians();
        g[0] = u.cos().powi(2);
        g[1] = 1.0;
        g[2] = -p[0] * (2.0 * u).sin() * std::f64::consts::PI / 180.0;
    }

    fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        Some((vec![0.0, 0.0, f64::NEG_INFINITY], vec![f64::INFINITY; 3]))
    }
}

pub fn fit_polarization(points: &[(f64, f64)]) -> Result<FitResult<PolarizationParams>> {
    fit_polarization_with(points, None, &LmOptions::default())
}

/// Unweighted fit; errors are scaled by the reduced χ². The default start
/// solves the equivalent linear harmonic model `c₀ + c₁cos2θ + c₂sin2θ`.
pub fn fit_polarization_with(
    points: &[(f64, f64)],
    init: Option<PolarizationParams>,
    lm: &LmOptions,
) -> Result<FitResult<PolarizationParams>> {
    if points.len() < 3 {
        return Err(Error::DegenerateData(format!(
            "need at least 3 angles, got {}",
            points.len()
        )));
    }
    if points.iter().any(|(t, y)| !t.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidConfig("non-finite angle or intensity".into()));
    }
    let mut diagnostics = Vec::new();
    let mut angles: Vec<f64> = points.iter().map(|(t, _)| wrap_180(*t)).collect();
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let widest_gap = angles
        .windows(2)
        .map(|w| w[1] - w[0])
        .chain(std::iter::once(
            angles[0] + 180.0 - angles[angles.len() - 1],
        ))
        .fold(0.0, f64::max);
    if angles.len() < 6 || widest_gap > 60.0 {
        diagnostics.push(format!(
            "sparse angular coverage: {} distinct angles, widest gap {widest_gap:.1}°",
            angles.len()
        ));
    }
    let start = match init {
        Some(p) => p,
        None => harmonic_guess(points)?,
    };
    let (x, y): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    let s = vec![1.0; x.len()];
    let problem = CurveFit {
        model: &PolarizationModel,
        x: &x,
        y: &y,
        sigma: &s,
    };
    let report = levenberg_marquardt(
        &problem,
        &[start.amp_a, start.offset_b, start.phase_phi_deg],
        &LmOptions {
            absolute_sigma: false,
            ..lm.clone()
        },
    )?;
    let params = PolarizationParams {
        amp_a: report.params[0],
        offset_b: report.params[1],
        phase_phi_deg: wrap_180(report.params[2]),
    };
    let errors = PolarizationParams {
        amp_a: report.std_errors[0],
        offset_b: report.std_errors[1],
        phase_phi_deg: report.std_errors[2],
    };
    let mut result = FitResult::from_report(
        "polarization",
        params,
        errors,
        &["amp_a", "offset_b", "phase_phi_deg"],
        &report,
    );
    result.diagnostics.extend(diagnostics);

    let (a, b) = (params.amp_a, params.offset_b);
    let d = a + 2.0 * b;
    let vis_err = if d > 0.0 {
        let ga = 2.0 * b / (d * d);
        let gb = -2.0 * a / (d * d);
        let c = &report.covariance;
        (ga * ga * c[(0, 0)] + 2.0 * ga * gb * c[(0, 1)] + gb * gb * c[(1, 1)])
            .max(0.0)
            .sqrt()
    } else {
        0.0
    };
    result.derived.insert(
        "visibility".into(),
        Estimate::new(params.visibility(), vis_err),
    );
    result.derived.insert(
        "dipole_angle_deg".into(),
        Estimate::new(params.dipole_angle_deg(), errors.phase_phi_deg),
    );
    let scale = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if a <= 1e-9 * scale.max(f64::MIN_POSITIVE) || a <= 3.0 * errors.amp_a {
        result
            .diagnostics
            .push("phi unidentifiable: amplitude A is consistent with zero".into());
    }
    Ok(result)
}

fn harmonic_guess(points: &[(f64, f64)]) -> Result<PolarizationParams> {
    use nalgebra::{DMatrix, DVector};
    let n = points.len();
    let design = DMatrix::from_fn(n, 3, |i, j| {
        let u = 2.0 * points[i].0.to_radians();
        match j {
            0 => 1.0,
            1 => u.cos(),
            _ => u.sin(),
        }
    });
    let rhs = DVector::from_iterator(n, points.iter().map(|p| p.1));
    let c = design
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::DegenerateData(format!("harmonic start failed: {e}")))?;
    // A·cos²(θ+φ) + B = B + A/2 + (A/2)(cos2φ·cos2θ − sin2φ·sin2θ)
    let half_a = c[1].hypot(c[2]);
    let phi = 0.5 * (-c[2]).atan2(c[1]).to_degrees();
    let a = 2.0 * half_a;
    Ok(PolarizationParams {
        amp_a: a,
        offset_b: (c[0] - half_a).max(0.0),
        phase_phi_deg: phi,
    })
}
