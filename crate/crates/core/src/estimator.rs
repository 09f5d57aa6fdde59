//! The spectral-regularized estimator in the representer form
//! `f = sum_i alpha_i F_{x_i}`, the a-priori parameter rule and error norms
//! in the scale `||B^s (f - f_hat)||`.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::linalg::{dot, top_eigenpairs, BridgeGram, SymOperator};
use crate::problem::{ProblemModel, SourceFunction};
use crate::sampling::{build_empirical_operator, Dataset};
use crate::spectral::{apply_matrix_function, landweber_steps, Method, Regularizer};

/// Sample size above which the structured bridge-kernel solvers are used.
pub const STRUCTURED_CUTOVER: usize = 400;

#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub alpha: Vec<f64>,
    pub xs: Vec<f64>,
    pub lambda_used: f64,
    pub method: Method,
    pub declared_q: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Solver {
    /// Eigendecomposition of the dense `n x n` matrix `T`.
    Dense,
    /// O(n) sweeps for the bridge kernel (Lanczos for cut-off).
    Structured,
    /// Structured when the kernel allows it and `n` is large.
    Auto,
}

/// `alpha = g_lambda(T) y / (n kappa^2)`, using `g(S*S) S* = S* g(SS*)`.
pub fn fit(p: &ProblemModel, d: &Dataset, reg: &Regularizer, lambda: f64) -> Result<Estimate> {
    fit_with(p, d, reg, lambda, Solver::Auto)
}

/// [`fit`] for an experiment targeting smoothness `r` in the norm `s`:
/// refuses when the declared qualification is below `r + s`.
pub fn fit_gated(
    p: &ProblemModel,
    d: &Dataset,
    reg: &Regularizer,
    lambda: f64,
    r: f64,
    s: f64,
) -> Result<Estimate> {
    reg.check_qualification(r, s)?;
    fit(p, d, reg, lambda)
}

pub fn fit_with(
    p: &ProblemModel,
    d: &Dataset,
    reg: &Regularizer,
    lambda: f64,
    solver: Solver,
) -> Result<Estimate> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(invalid(format!("lambda = {lambda} outside (0, 1]")));
    }
    if d.is_empty() {
        return Err(invalid("dataset is empty"));
    }
    let n = d.len();
    let nk = n as f64 * p.kappa_sq();
    let structured = match solver {
        Solver::Dense => false,
        Solver::Structured => {
            if !p.has_bridge_structure() {
                return Err(invalid("structured solvers need the closed-form bridge kernel"));
            }
            true
        }
        Solver::Auto => p.has_bridge_structure() && n > STRUCTURED_CUTOVER,
    };
    let z = if structured {
        let op = BridgeGram::new(&d.xs, 1.0 / nk)?;
        structured_apply(&op, reg, lambda, &d.ys)?
    } else {
        let emp = build_empirical_operator(p, &d.xs)?;
        let g = apply_matrix_function(reg, lambda, &emp.t)?;
        (g * DVector::from_column_slice(&d.ys)).as_slice().to_vec()
    };
    Ok(Estimate {
        alpha: z.into_iter().map(|v| v / nk).collect(),
        xs: d.xs.clone(),
        lambda_used: lambda,
        method: reg.method,
        declared_q: reg.declared_q,
    })
}

/// `g_lambda(T) y` for `T` given as a bridge Gram operator.
fn structured_apply(op: &BridgeGram, reg: &Regularizer, lambda: f64, y: &[f64]) -> Result<Vec<f64>> {
    let n = op.dim();
    match reg.method {
        Method::Tikhonov => Ok(op.solve_shifted(lambda, y)),
        Method::Landweber => {
            // z <- z + (y - T z), k times from zero: z = sum_{j<k} (I - T)^j y
            let mut z = vec![0.0; n];
            let mut tz = vec![0.0; n];
            for _ in 0..landweber_steps(lambda) {
                op.apply(&z, &mut tz);
                for i in 0..n {
                    z[i] += y[i] - tz[i];
                }
            }
            Ok(z)
        }
        Method::SpectralCutoff => {
            let pairs = top_eigenpairs(op, lambda, 1e-11, 0x5eed)?;
            let mut z = vec![0.0; n];
            for (theta, u) in pairs.values.iter().zip(&pairs.vectors) {
                if *theta > 1.0 + crate::spectral::SPECTRUM_TOL {
                    return Err(crate::Error::SpectrumOutOfRange { min: 0.0, max: *theta });
                }
                let w = reg.g(lambda, theta.min(1.0)) * dot(u, y);
                z.iter_mut().zip(u).for_each(|(zi, ui)| *zi += w * ui);
            }
            Ok(z)
        }
    }
}

/// `min((sigma^2 / (R^2 n))^(b / (2br + b + 1)), 1)`.
pub fn lambda_rule(sigma: f64, radius: f64, n: usize, b: f64, r: f64) -> Result<f64> {
    if !(b > 1.0) {
        return Err(invalid(format!("ill-posedness b = {b} must exceed 1")));
    }
    if !(sigma > 0.0 && radius > 0.0 && r > 0.0) || n == 0 {
        return Err(invalid("sigma, R, r and n must be positive"));
    }
    let base = sigma * sigma / (radius * radius * n as f64);
    Ok(base.powf(b / (2.0 * b * r + b + 1.0)).min(1.0))
}

fn check_rate_args(b: f64, r: f64, s: f64) -> Result<()> {
    if !(b > 1.0) {
        return Err(invalid(format!("ill-posedness b = {b} must exceed 1")));
    }
    if !(r > 0.0) {
        return Err(invalid(format!("smoothness r = {r} must be positive")));
    }
    if !(0.0..=0.5).contains(&s) {
        return Err(invalid(format!("norm index s = {s} outside [0, 1/2]")));
    }
    Ok(())
}

/// `b (r + s) / (2br + b + 1)`.
pub fn rate_exponent(b: f64, r: f64, s: f64) -> Result<f64> {
    check_rate_args(b, r, s)?;
    Ok(b * (r + s) / (2.0 * b * r + b + 1.0))
}

/// `R (sigma^2 / (R^2 n))^(rate_exponent)`.
pub fn theoretical_rate(sigma: f64, radius: f64, n: usize, b: f64, r: f64, s: f64) -> Result<f64> {
    let e = rate_exponent(b, r, s)?;
    if !(sigma > 0.0 && radius > 0.0) || n == 0 {
        return Err(invalid("sigma, R and n must be positive"));
    }
    Ok(radius * (sigma * sigma / (radius * radius * n as f64)).powf(e))
}

/// Eigen-coefficients `f_hat_j = sum_i alpha_i <F_{x_i}, e_j>` for `j <= J`.
pub fn estimate_coefficients(p: &ProblemModel, est: &Estimate) -> Vec<f64> {
    let big_j = p.truncation();
    let mut coeffs = vec![0.0; big_j];
    let mut row = vec![0.0; big_j];
    for (&x, &a) in est.xs.iter().zip(&est.alpha) {
        if a == 0.0 {
            continue;
        }
        p.feature_row(x, &mut row);
        coeffs.iter_mut().zip(&row).for_each(|(c, r)| *c += a * r);
    }
    coeffs
}

/// `||f_hat||_H^2 = alpha^T K alpha`.
pub fn estimate_norm_sq(p: &ProblemModel, est: &Estimate) -> f64 {
    let n = est.alpha.len();
    if p.has_bridge_structure() && n > STRUCTURED_CUTOVER {
        if let Ok(op) = BridgeGram::new(&est.xs, 1.0) {
            let mut ka = vec![0.0; n];
            op.apply(&est.alpha, &mut ka);
            return dot(&ka, &est.alpha);
        }
    }
    let mut total = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for k in 0..n {
            row += p.kernel(est.xs[i], est.xs[k]) * est.alpha[k];
        }
        total += est.alpha[i] * row;
    }
    total
}

/// An error norm together with a bound on what truncation at `J` omits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorNorm {
    pub value: f64,
    /// Upper bound on `(sum_{j > J} mu_j^{2s} f_hat_j^2)^(1/2)`.
    pub floor: f64,
}

fn check_s(s: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&s) {
        return Err(invalid(format!("norm index s = {s} outside [0, 1/2]")));
    }
    Ok(())
}

fn truncated_error(p: &ProblemModel, f: &SourceFunction, fhat: &[f64], s: f64) -> f64 {
    p.eigenvalues()
        .iter()
        .enumerate()
        .map(|(j, &mu)| {
            let fj = f.coeffs.get(j).copied().unwrap_or(0.0);
            let w = if s == 0.0 { 1.0 } else { mu.powf(2.0 * s) };
            w * (fj - fhat[j]).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// `sqrt(sum_{j <= J} mu_j^{2s} (f_j - f_hat_j)^2)`.
pub fn error_norm(p: &ProblemModel, f: &SourceFunction, est: &Estimate, s: f64) -> Result<f64> {
    check_s(s)?;
    Ok(truncated_error(p, f, &estimate_coefficients(p, est), s))
}

/// [`error_norm`] plus the truncation floor. The tail energy of the estimate
/// past `J` is `||f_hat||^2 - sum_{j <= J} f_hat_j^2`, and `mu_j <= mu_J`
/// there.
pub fn error_norm_with_floor(
    p: &ProblemModel,
    f: &SourceFunction,
    est: &Estimate,
    s: f64,
) -> Result<ErrorNorm> {
    check_s(s)?;
    let fhat = estimate_coefficients(p, est);
    let value = truncated_error(p, f, &fhat, s);
    let head: f64 = fhat.iter().map(|c| c * c).sum();
    let tail = (estimate_norm_sq(p, est) - head).max(0.0);
    let mu_last = *p.eigenvalues().last().unwrap_or(&0.0);
    let weight = if s == 0.0 { 1.0 } else { mu_last.powf(2.0 * s) };
    Ok(ErrorNorm { value, floor: (weight * tail).sqrt() })
}

/// `(A f_hat)(x) = sum_i alpha_i K(x_i, x)`.
pub fn predict(p: &ProblemModel, est: &Estimate, x: f64) -> f64 {
    est.xs
        .iter()
        .zip(&est.alpha)
        .map(|(&xi, &a)| a * p.kernel(xi, x))
        .sum()
}

/// Reference fit built on the `J x J` coefficient-space operator
/// `B_x = (1/(n kappa^2)) sum_i c_i c_i^T`, returning `f_hat_j` directly.
pub fn fit_truncated_spectral(
    p: &ProblemModel,
    d: &Dataset,
    reg: &Regularizer,
    lambda: f64,
) -> Result<Vec<f64>> {
    let big_j = p.truncation();
    let n = d.len();
    let nk = n as f64 * p.kappa_sq();
    let mut c = DMatrix::zeros(n, big_j);
    let mut row = vec![0.0; big_j];
    for (i, &x) in d.xs.iter().enumerate() {
        p.feature_row(x, &mut row);
        for j in 0..big_j {
            c[(i, j)] = row[j];
        }
    }
    let bx = (c.transpose() * &c) / nk;
    let bx = (&bx + bx.transpose()) * 0.5;
    let rhs = c.transpose() * DVector::from_column_slice(&d.ys) / nk;
    let g = apply_matrix_function(reg, lambda, &bx)?;
    Ok((g * rhs).as_slice().to_vec())
}

/// Error norm of a coefficient-space estimate.
pub fn coefficient_error_norm(p: &ProblemModel, f: &SourceFunction, fhat: &[f64], s: f64) -> Result<f64> {
    check_s(s)?;
    Ok(truncated_error(p, f, fhat, s))
}
