//! Levenberg–Marquardt with Marquardt diagonal scaling and box projection.
//!
//! Each iteration solves `(JᵀJ + λ·diag(JᵀJ)) δ = −Jᵀr`, clamps `x + δ` to
//! the parameter box, and accepts the step only if the cost `½‖r‖²` drops
//! (λ ÷ 10), otherwise retries with λ × 10. Convergence is declared when the
//! relative step or the relative cost decrease falls below tolerance.
//! The covariance is `(JᵀJ)⁻¹` at the solution (a pseudo-inverse when the
//! problem is rank deficient), scaled by the reduced χ² unless the residual
//! weights are absolute.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A least-squares problem in residual form: minimise `½ Σ rᵢ(x)²`.
pub trait LeastSquares {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    fn residuals(&self, x: &[f64], out: &mut [f64]);
    /// Analytic `∂rᵢ/∂xⱼ`. Returning `false` means "not available".
    fn jacobian(&self, _x: &[f64], _jac: &mut DMatrix<f64>) -> bool {
        false
    }
    /// Lower and upper bounds per parameter.
    fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMode {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone)]
pub struct LmOptions {
    /// Relative step tolerance.
    pub xtol: f64,
    /// Relative cost-decrease tolerance.
    pub ftol: f64,
    /// Gradient infinity-norm tolerance.
    pub gtol: f64,
    pub max_iterations: usize,
    pub initial_lambda: f64,
    pub jacobian: JacobianMode,
    /// Residuals are already divided by true standard deviations; do not
    /// rescale the covariance by the reduced χ².
    pub absolute_sigma: bool,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            xtol: 1e-10,
            ftol: 1e-10,
            gtol: 1e-14,
            max_iterations: 200,
            initial_lambda: 1e-6,
            jacobian: JacobianMode::Analytic,
            absolute_sigma: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub std_errors: Vec<f64>,
    pub cost: f64,
    pub residual_norm: f64,
    pub reduced_chi2: f64,
    pub n_residuals: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Numerical rank of `JᵀJ` at the solution.
    pub rank: usize,
    pub diagnostics: Vec<String>,
}

/// Central differences with step `1e-6·|x|` (`1e-6` at zero) (pulled inside the box).
pub fn finite_difference_jacobian<P: LeastSquares + ?Sized>(
    problem: &P,
    x: &[f64],
) -> DMatrix<f64> {
    let n = problem.n_params();
    let m = problem.n_residuals();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    let mut rp = vec![0.0; m];
    let mut rm = vec![0.0; m];
    let bounds = problem.bounds();
    for j in 0..n {
        let h = if x[j] == 0.0 { 1e-6 } else { 1e-6 * x[j].abs() };
        let (mut up, mut down) = (x[j] + h, x[j] - h);
        if let Some((lo, hi)) = &bounds {
            up = up.min(hi[j]);
            down = down.max(lo[j]);
        }
        xp[j] = up;
        problem.residuals(&xp, &mut rp);
        xp[j] = down;
        problem.residuals(&xp, &mut rm);
        xp[j] = x[j];
        let span = up - down;
        for i in 0..m {
            jac[(i, j)] = (rp[i] - rm[i]) / span;
        }
    }
    jac
}

fn jacobian_at<P: LeastSquares + ?Sized>(
    problem: &P,
    x: &[f64],
    mode: JacobianMode,
) -> DMatrix<f64> {
    if mode == JacobianMode::Analytic {
        let mut jac = DMatrix::zeros(problem.n_residuals(), problem.n_params());
        if problem.jacobian(x, &mut jac) {
            return jac;
        }
    }
    finite_difference_jacobian(problem, x)
}

fn project(x: &mut [f64], bounds: &Option<(Vec<f64>, Vec<f64>)>) {
    if let Some((lo, hi)) = bounds {
        for (j, v) in x.iter_mut().enumerate() {
            *v = v.clamp(lo[j], hi[j]);
        }
    }
}

fn cost_of(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

/// Minimises `½‖r(x)‖²` from `init`.
///
/// Fails with [`Error::NonConvergence`] when `max_iterations` pass without
/// meeting a tolerance and with [`Error::SingularJacobian`] when the
/// Jacobian is non-finite or identically zero at the start.
pub fn levenberg_marquardt<P: LeastSquares + ?Sized>(
    problem: &P,
    init: &[f64],
    options: &LmOptions,
) -> Result<LmReport> {
    let n = problem.n_params();
    let m = problem.n_residuals();
    assert_eq!(init.len(), n, "initial guess has the wrong length");
    if m == 0 {
        return Err(Error::DegenerateData("no residuals".into()));
    }
    let bounds = problem.bounds();
    let mut x = init.to_vec();
    project(&mut x, &bounds);
    let mut r = vec![0.0; m];
    problem.residuals(&x, &mut r);
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularJacobian(
            "residuals are not finite at the initial guess".into(),
        ));
    }
    let mut cost = cost_of(&r);
    let mut jac = jacobian_at(problem, &x, options.jacobian);
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularJacobian(
            "non-finite Jacobian at the initial guess".into(),
        ));
    }
    if jac.iter().all(|&v| v == 0.0) {
        return Err(Error::SingularJacobian(
            "Jacobian is identically zero".into(),
        ));
    }

    let mut lambda = options.initial_lambda;
    let mut converged = false;
    let mut iterations = 0;
    let mut x_new = vec![0.0; n];
    let mut r_new = vec![0.0; m];

    while iterations < options.max_iterations {
        iterations += 1;
        let rv = DVector::from_column_slice(&r);
        let grad = jac.tr_mul(&rv);
        let jtj = jac.tr_mul(&jac);
        if grad.amax() <= options.gtol {
            converged = true;
            break;
        }
        let diag_floor = 1e-12 * jtj.diagonal().amax().max(f64::MIN_POSITIVE);
        let mut accepted = false;
        while lambda < 1e20 {
            let mut a = jtj.clone();
            for j in 0..n {
                a[(j, j)] += lambda * jtj[(j, j)].max(diag_floor);
            }
            let Some(chol) = a.cholesky() else {
                lambda = (lambda * 10.0).max(1e-12);
                continue;
            };
            let step = chol.solve(&(-&grad));
            for j in 0..n {
                x_new[j] = x[j] + step[j];
            }
            project(&mut x_new, &bounds);
            problem.residuals(&x_new, &mut r_new);
            let cost_new = cost_of(&r_new);
            if cost_new.is_finite() && cost_new <= cost {
                let dx: f64 = x
                    .iter()
                    .zip(&x_new)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let xn: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let small_step = dx <= options.xtol * (xn + options.xtol);
                let small_drop = cost - cost_new <= options.ftol * cost;
                std::mem::swap(&mut x, &mut x_new);
                std::mem::swap(&mut r, &mut r_new);
                cost = cost_new;
                lambda /= 10.0;
                accepted = true;
                if small_step || small_drop {
                    converged = true;
                }
                break;
            }
            lambda = (lambda * 10.0).max(1e-12);
        }
        if !accepted {
            // No direction lowers the cost: a minimum to working precision.
            converged = true;
            break;
        }
        jac = jacobian_at(problem, &x, options.jacobian);
        if converged {
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence { iterations, cost });
    }
    Ok(finish(x, &r, &jac, cost, iterations, options))
}

fn finish(
    x: Vec<f64>,
    r: &[f64],
    jac: &DMatrix<f64>,
    cost: f64,
    iterations: usize,
    options: &LmOptions,
) -> LmReport {
    let n = x.len();
    let m = r.len();
    let jtj = jac.tr_mul(jac);
    let mut diagnostics = Vec::new();
    // Scale to unit diagonal so the rank test is insensitive to parameter units.
    let scale: Vec<f64> = (0..n).map(|j| jtj[(j, j)].sqrt()).collect();
    let mut scaled = jtj.clone();
    for i in 0..n {
        for j in 0..n {
            let s = scale[i] * scale[j];
            scaled[(i, j)] = if s > 0.0 { jtj[(i, j)] / s } else { 0.0 };
        }
    }
    let svd = scaled.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = 1e-12 * smax.max(f64::MIN_POSITIVE) * n as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let pinv = svd
        .pseudo_inverse(tol)
        .unwrap_or_else(|_| DMatrix::zeros(n, n));
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let s = scale[i] * scale[j];
            cov[(i, j)] = if s > 0.0 { pinv[(i, j)] / s } else { 0.0 };
        }
    }
    if rank < n {
        diagnostics.push(format!(
            "rank-deficient normal matrix (rank {rank} of {n}); covariance is a pseudo-inverse"
        ));
    }
    let dof = m.saturating_sub(n);
    let chi2 = 2.0 * cost;
    let reduced_chi2 = if dof > 0 { chi2 / dof as f64 } else { f64::NAN };
    if !options.absolute_sigma {
        let s = if dof > 0 { reduced_chi2 } else { 0.0 };
        cov *= s;
    }
    let std_errors = (0..n).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    LmReport {
        params: x,
        covariance: cov,
        std_errors,
        cost,
        residual_norm: chi2.sqrt(),
        reduced_chi2,
        n_residuals: m,
        iterations,
        converged: true,
        rank,
        diagnostics,
    }
}

/// A scalar model `y = f(x; p)` with an analytic gradient in `p`.
pub trait CurveModel {
    fn n_params(&self) -> usize;
    fn eval(&self, x: f64, p: &[f64]) -> f64;
    /// Writes `∂f/∂pⱼ` into `grad`.
    fn gradient(&self, x: f64, p: &[f64], grad: &mut [f64]);
    fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }
}

/// Weighted curve fit: residuals `(yᵢ − f(xᵢ))/σᵢ`.
pub struct CurveFit<'a, M: CurveModel> {
    pub model: &'a M,
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub sigma: &'a [f64],
}

impl<M: CurveModel> LeastSquares for CurveFit<'_, M> {
    fn n_params(&self) -> usize {
        self.model.n_params()
    }

    fn n_residuals(&self) -> usize {
        self.x.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for i in 0..self.x.len() {
            out[i] = (self.y[i] - self.model.eval(self.x[i], p)) / self.sigma[i];
        }
    }

    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) -> bool {
        let mut g = vec![0.0; self.model.n_params()];
        for i in 0..self.x.len() {
            self.model.gradient(self.x[i], p, &mut g);
            for (j, gj) in g.iter().enumerate() {
                jac[(i, j)] = -gj / self.sigma[i];
            }
        }
        true
    }

    fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        self.model.bounds()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Line;

    impl CurveModel for Line {
        fn n_params(&self) -> usize {
            1
        }
        fn eval(&self, x: f64, p: &[f64]) -> f64 {
            p[0] * x
        }
        fn gradient(&self, x: f64, _p: &[f64], g: &mut [f64]) {
            g[0] = x;
        }
    }

    #[test]
    fn linear_model_one_step() {
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v).collect();
        let s = vec![1.0; 10];
        let fit = CurveFit {
            model: &Line,
            x: &x,
            y: &y,
            sigma: &s,
        };
        let one = LmOptions {
            max_iterations: 1,
            initial_lambda: 0.0,
            ..LmOptions::default()
        };
        // A single iteration must already land on the answer.
        match levenberg_marquardt(&fit, &[0.0], &one) {
            Ok(r) => assert!((r.params[0] - 2.5).abs() < 1e-9),
            Err(Error::NonConvergence { cost, .. }) => assert!(cost < 1e-20),
            Err(e) => panic!("{e}"),
        }
        let r = levenberg_marquardt(
            &fit,
            &[0.0],
            &LmOptions {
                initial_lambda: 0.0,
                ..LmOptions::default()
            },
        )
        .unwrap();
        assert_eq!(r.iterations, 2);
        assert!((r.params[0] - 2.5).abs() < 1e-12);
    }

    /// Rosenbrock as residuals: r₁ = 10(y − x²), r₂ = 1 − x; minimum (1, 1).
    struct Rosenbrock;

    impl LeastSquares for Rosenbrock {
        fn n_params(&self) -> usize {
            2
        }
        fn n_residuals(&self) -> usize {
            2
        }
        fn residuals(&self, p: &[f64], out: &mut [f64]) {
            out[0] = 10.0 * (p[1] - p[0] * p[0]);
            out[1] = 1.0 - p[0];
        }
        fn jacobian(&self, p: &[f64], j: &mut DMatrix<f64>) -> bool {
            j[(0, 0)] = -20.0 * p[0];
            j[(0, 1)] = 10.0;
            j[(1, 0)] = -1.0;
            j[(1, 1)] = 0.0;
            true
        }
    }

    #[test]
    fn rosenbrock_valley() {
        for mode in [JacobianMode::Analytic, JacobianMode::FiniteDifference] {
            let opts = LmOptions {
                jacobian: mode,
                ..LmOptions::default()
            };
            let r = levenberg_marquardt(&Rosenbrock, &[-1.2, 1.0], &opts).unwrap();
            assert!((r.params[0] - 1.0).abs() < 1e-8, "{:?}", r.params);
            assert!((r.params[1] - 1.0).abs() < 1e-8, "{:?}", r.params);
        }
    }

    #[test]
    fn bounds_are_respected() {
        struct Bounded;
        impl LeastSquares for Bounded {
            fn n_params(&self) -> usize {
                1
            }
            fn n_residuals(&self) -> usize {
                1
            }
            fn residuals(&self, p: &[f64], out: &mut [f64]) {
                out[0] = p[0] + 3.0;
            }
            fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
                Some((vec![1.0], vec![10.0]))
            }
        }
        let r = levenberg_marquardt(&Bounded, &[5.0], &LmOptions::default()).unwrap();
        assert_eq!(r.params[0], 1.0);
    }

    #[test]
    fn zero_jacobian_is_singular() {
        struct Flat;
        impl LeastSquares for Flat {
            fn n_params(&self) -> usize {
                1
            }
            fn n_residuals(&self) -> usize {
                3
            }
            fn residuals(&self, _p: &[f64], out: &mut [f64]) {
                out.fill(1.0);
            }
        }
        assert!(matches!(
            levenberg_marquardt(&Flat, &[0.0], &LmOptions::default()),
            Err(Error::SingularJacobian(_))
        ));
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let opts = LmOptions {
            max_iterations: 2,
            ..LmOptions::default()
        };
        assert!(matches!(
            levenberg_marquardt(&Rosenbrock, &[-1.2, 1.0], &opts),
            Err(Error::NonConvergence { iterations: 2, .. })
        ));
    }

    #[test]
    fn covariance_of_straight_line() {
        // y = a x with unit σ: var(a) = 1/Σx².
        let x = [1.0, 2.0, 3.0];
        let y = [1.0, 2.1, 2.9];
        let s = [1.0; 3];
        let fit = CurveFit {
            model: &Line,
            x: &x,
            y: &y,
            sigma: &s,
        };
        let r = levenberg_marquardt(&fit, &[1.0], &LmOptions::default()).unwrap();
        assert!((r.covariance[(0, 0)] - 1.0 / 14.0).abs() < 1e-12);
    }
}
