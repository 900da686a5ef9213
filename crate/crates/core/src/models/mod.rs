//! Closed-form models for the four measured curves and their fits.
//!
//! Every model implements [`CurveModel`](crate::fit::CurveModel) with an
//! analytic gradient; [`max_gradient_error`] compares it against central
//! differences.

pub mod g2;
pub mod polarization;
pub mod saturation;
pub mod survival;

pub use g2::{
    background_corrected_g2_zero, eval_g2_train, eval_g2_train_terms, fit_g2, fit_g2_points,
    fit_g2_with, truncation_terms, G2FitOptions, G2Model, G2TrainParams,
};
pub use polarization::{
    eval_polarization, eval_polarization_raw, fit_polarization, fit_polarization_with,
    PolarizationModel, PolarizationParams,
};
pub use saturation::{
    eval_saturation, fit_saturation, fit_saturation_with, SaturationModel, SaturationParams,
    SaturationPoint,
};
pub use survival::{
    eval_survival, fit_survival, fit_survival_with, BiexpConstModel, SingleExpModel, SurvivalModel,
    SurvivalVariant,
};

use crate::fit::CurveModel;

/// Largest componentwise disagreement between the analytic gradient of
/// `model` at `(x, p)` and a central difference with step `1e-6·sⱼ`, where `sⱼ = |pⱼ|`
/// (or 1 when `pⱼ = 0`).
///
/// Component `j` is compared relative to `max(|analytic|, |numeric|, |f|/sⱼ)`.
/// The last term is the slope that would move `f` by its own size over a unit
/// relative change of `pⱼ`; below it the difference quotient is dominated by
/// roundoff and only absolute agreement at that scale is meaningful.
pub fn max_gradient_error<M: CurveModel + ?Sized>(model: &M, x: f64, p: &[f64]) -> f64 {
    let n = model.n_params();
    let mut analytic = vec![0.0; n];
    model.gradient(x, p, &mut analytic);
    let mut q = p.to_vec();
    let numeric: Vec<f64> = (0..n)
        .map(|j| {
            let h = 1e-6 * step_scale(p[j]);
            q[j] = p[j] + h;
            let up = model.eval(x, &q);
            q[j] = p[j] - h;
            let down = model.eval(x, &q);
            q[j] = p[j];
            (up - down) / (2.0 * h)
        })
        .collect();
    let value = model.eval(x, p).abs();
    analytic
        .iter()
        .zip(&numeric)
        .zip(p)
        .map(|((a, f), pj)| {
            let floor = (value / step_scale(*pj)).max(f64::MIN_POSITIVE);
            (a - f).abs() / a.abs().max(f.abs()).max(floor)
        })
        .fold(0.0, f64::max)
}

fn step_scale(p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else {
        p.abs()
    }
}

/// Ordinary least squares for `y ≈ a + b·x`; `None` when `x` has no spread.
pub(crate) fn linear_regression(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    Some((my - b * mx, b))
}
