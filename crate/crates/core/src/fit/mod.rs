//! Weighted nonlinear least squares and the result type shared by every
//! model fit.

mod lm;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use lm::{
    finite_difference_jacobian, levenberg_marquardt, CurveFit, CurveModel, JacobianMode,
    LeastSquares, LmOptions, LmReport,
};

/// A value with its 1σ uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub fn new(value: f64, error: f64) -> Self {
        Estimate { value, error }
    }
}

/// Outcome of fitting one model.
///
/// `params` and `std_errors` share the model's parameter type; fixed
/// parameters carry a zero error. `covariance` is indexed like
/// `param_names` and covers the fitted parameters only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult<P> {
    pub model: String,
    pub params: P,
    pub std_errors: P,
    pub param_names: Vec<String>,
    pub covariance: Vec<Vec<f64>>,
    /// Quantities computed from the parameters, with propagated errors.
    pub derived: BTreeMap<String, Estimate>,
    /// `‖r‖₂` of the weighted residuals at the solution.
    pub residual_norm: f64,
    /// χ² per degree of freedom.
    pub reduced_chi2: f64,
    pub n_points: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Identifiability and data-quality notes, e.g. `m unidentifiable`.
    pub diagnostics: Vec<String>,
}

impl<P> FitResult<P> {
    pub(crate) fn from_report(
        model: &str,
        params: P,
        std_errors: P,
        names: &[&str],
        report: &LmReport,
    ) -> Self {
        FitResult {
            model: model.to_owned(),
            params,
            std_errors,
            param_names: names.iter().map(|s| (*s).to_owned()).collect(),
            covariance: matrix_rows(&report.covariance),
            derived: BTreeMap::new(),
            residual_norm: report.residual_norm,
            reduced_chi2: report.reduced_chi2,
            n_points: report.n_residuals,
            iterations: report.iterations,
            converged: report.converged,
            diagnostics: report.diagnostics.clone(),
        }
    }

    pub fn is_flagged(&self, needle: &str) -> bool {
        self.diagnostics.iter().any(|d| d.contains(needle))
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}
