//! Monte Carlo coverage of the concentration bounds for the empirical
//! operators, and the operator-power perturbation inequality.
//!
//! Operators on `H` are truncated to the `J` modes of the problem instance.
//! The truncated features still satisfy `||F_x||^2 <= kappa^2`, so every
//! bound applies verbatim to the truncated model.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::effdim::effective_dimension;
use crate::error::{invalid, Error, Result};
use crate::linalg::{random_orthogonal, sym_spectral_norm};
use crate::problem::{ProblemModel, SourceFunction};
use crate::sampling::{cell_rng, draw_dataset_with, NoiseModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Bound {
    /// `||B - B_x||_HS <= 6 log(2/eta) / sqrt(n)`
    HsDeviation,
    /// `||(B + lambda)^{-1/2} (B_x f - S_x^* y)|| <= 2 log(2/eta) kappa^-1 (M / (n sqrt(lambda)) + sqrt(sigma^2 N / n))`
    Noise,
    /// `||(B + lambda)^{-1} (B - B_x)||_HS <= 2 log(2/eta) (2 / (n lambda) + sqrt(N / (n lambda)))`
    WeightedDeviation,
    /// `||(B_x + lambda)^{-1} (B + lambda)|| <= 2`
    Neumann,
}

impl Bound {
    pub fn id(self) -> &'static str {
        match self {
            Bound::HsDeviation => "hs-deviation",
            Bound::Noise => "noise",
            Bound::WeightedDeviation => "weighted-deviation",
            Bound::Neumann => "neumann",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "hs-deviation" | "hs" => Ok(Bound::HsDeviation),
            "noise" => Ok(Bound::Noise),
            "weighted-deviation" | "weighted" => Ok(Bound::WeightedDeviation),
            "neumann" => Ok(Bound::Neumann),
            other => Err(invalid(format!("unknown bound `{other}`"))),
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoverageReport {
    pub bound: Bound,
    pub n: usize,
    pub lambda: Option<f64>,
    pub eta: f64,
    pub replicates: usize,
    pub violations: usize,
    pub empirical_coverage: f64,
    /// The bound's right-hand side.
    pub threshold: f64,
    /// Largest observed left-hand side.
    pub max_statistic: f64,
}

impl CoverageReport {
    /// `1 - eta - 3 sqrt(eta (1 - eta) / reps)`.
    pub fn required_coverage(&self) -> f64 {
        1.0 - self.eta - 3.0 * (self.eta * (1.0 - self.eta) / self.replicates as f64).sqrt()
    }

    pub fn passes(&self) -> bool {
        self.empirical_coverage >= self.required_coverage()
    }
}

fn check_common(n: usize, eta: f64, reps: usize) -> Result<()> {
    if n == 0 || reps == 0 {
        return Err(invalid("n and the replicate count must be positive"));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(invalid(format!("eta = {eta} outside (0, 1)")));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(invalid(format!("lambda = {lambda} outside (0, 1]")));
    }
    Ok(())
}

/// Feature matrix `C[i][j] = <F_{x_i}, e_j>` and `B_x = C^T C / (n kappa^2)`.
fn empirical_bx(p: &ProblemModel, xs: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let big_j = p.truncation();
    let n = xs.len();
    let mut c = DMatrix::zeros(n, big_j);
    let mut row = vec![0.0; big_j];
    for (i, &x) in xs.iter().enumerate() {
        p.feature_row(x, &mut row);
        for j in 0..big_j {
            c[(i, j)] = row[j];
        }
    }
    let bx = c.tr_mul(&c) / (n as f64 * p.kappa_sq());
    (c, bx)
}

fn normalized_eigenvalues(p: &ProblemModel) -> Vec<f64> {
    p.eigenvalues().iter().map(|m| m / p.kappa_sq()).collect()
}

fn draw_design(p: &ProblemModel, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| p.design().sample(rng)).collect()
}

fn tally(
    bound: Bound,
    n: usize,
    lambda: Option<f64>,
    eta: f64,
    threshold: f64,
    stats: Vec<f64>,
) -> CoverageReport {
    let replicates = stats.len();
    let violations = stats.iter().filter(|&&v| v > threshold).count();
    CoverageReport {
        bound,
        n,
        lambda,
        eta,
        replicates,
        violations,
        empirical_coverage: 1.0 - violations as f64 / replicates as f64,
        threshold,
        max_statistic: stats.iter().copied().fold(0.0, f64::max),
    }
}

fn replicate_stats<F>(seed: u64, reps: usize, stat: F) -> Vec<f64>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    (0..reps)
        .into_par_iter()
        .map(|rep| stat(&mut cell_rng(seed, rep as u64)))
        .collect()
}

pub fn hs_deviation_threshold(n: usize, eta: f64) -> f64 {
    6.0 * (2.0 / eta).ln() / (n as f64).sqrt()
}

pub fn check_operator_hs_deviation(
    p: &ProblemModel,
    n: usize,
    eta: f64,
    reps: usize,
    seed: u64,
) -> Result<CoverageReport> {
    check_common(n, eta, reps)?;
    let mu = normalized_eigenvalues(p);
    let stats = replicate_stats(seed, reps, |rng| {
        let (_, mut bx) = empirical_bx(p, &draw_design(p, n, rng));
        for (j, m) in mu.iter().enumerate() {
            bx[(j, j)] -= m;
        }
        bx.norm()
    });
    Ok(tally(Bound::HsDeviation, n, None, eta, hs_deviation_threshold(n, eta), stats))
}

pub fn noise_threshold(p: &ProblemModel, n: usize, lambda: f64, eta: f64, sigma: f64, m: f64) -> Result<f64> {
    let eff = effective_dimension(p, lambda)?.value();
    let nf = n as f64;
    Ok(2.0 * (2.0 / eta).ln() / p.kappa_sq().sqrt() * (m / (nf * lambda.sqrt()) + (sigma * sigma * eff / nf).sqrt()))
}

#[allow(clippy::too_many_arguments)]
pub fn check_noise_term(
    p: &ProblemModel,
    f: &SourceFunction,
    n: usize,
    lambda: f64,
    sigma: f64,
    noise_model: NoiseModel,
    eta: f64,
    reps: usize,
    seed: u64,
) -> Result<CoverageReport> {
    check_common(n, eta, reps)?;
    check_lambda(lambda)?;
    if !(sigma > 0.0) {
        return Err(invalid("sigma must be positive"));
    }
    let threshold = noise_threshold(p, n, lambda, eta, sigma, noise_model.bernstein_m(sigma))?;
    let weights: Vec<f64> = normalized_eigenvalues(p).iter().map(|m| (m + lambda).powf(-0.5)).collect();
    let nk = n as f64 * p.kappa_sq();
    let fvec = DVector::from_iterator(p.truncation(), (0..p.truncation()).map(|j| f.coeffs.get(j).copied().unwrap_or(0.0)));
    let stats = replicate_stats(seed, reps, |rng| {
        let d = draw_dataset_with(p, f, n, sigma, noise_model, rng, seed).expect("validated inputs");
        let (c, _) = empirical_bx(p, &d.xs);
        // B_x f - S_x^* y = C^T (C f - y) / (n kappa^2)
        let resid = &c * &fvec - DVector::from_column_slice(&d.ys);
        let v = c.tr_mul(&resid) / nk;
        v.iter().zip(&weights).map(|(a, w)| (a * w).powi(2)).sum::<f64>().sqrt()
    });
    Ok(tally(Bound::Noise, n, Some(lambda), eta, threshold, stats))
}

pub fn weighted_deviation_threshold(p: &ProblemModel, n: usize, lambda: f64, eta: f64) -> Result<f64> {
    let eff = effective_dimension(p, lambda)?.value();
    let nl = n as f64 * lambda;
    Ok(2.0 * (2.0 / eta).ln() * (2.0 / nl + (eff / nl).sqrt()))
}

pub fn check_weighted_operator_deviation(
    p: &ProblemModel,
    n: usize,
    lambda: f64,
    eta: f64,
    reps: usize,
    seed: u64,
) -> Result<CoverageReport> {
    check_common(n, eta, reps)?;
    check_lambda(lambda)?;
    let threshold = weighted_deviation_threshold(p, n, lambda, eta)?;
    let mu = normalized_eigenvalues(p);
    let stats = replicate_stats(seed, reps, |rng| {
        let (_, bx) = empirical_bx(p, &draw_design(p, n, rng));
        let mut total = 0.0;
        for k in 0..mu.len() {
            for j in 0..mu.len() {
                let diag = if j == k { mu[j] } else { 0.0 };
                total += ((diag - bx[(j, k)]) / (mu[j] + lambda)).powi(2);
            }
        }
        total.sqrt()
    });
    Ok(tally(Bound::WeightedDeviation, n, Some(lambda), eta, threshold, stats))
}

/// Whether `sqrt(n lambda) >= 8 log(2/eta) sqrt(max(N(lambda), 1))`, with
/// both sides returned.
pub fn neumann_condition(p: &ProblemModel, n: usize, lambda: f64, eta: f64) -> Result<(bool, f64, f64)> {
    check_lambda(lambda)?;
    let eff = effective_dimension(p, lambda)?.value();
    let lhs = (n as f64 * lambda).sqrt();
    let rhs = 8.0 * (2.0 / eta).ln() * eff.max(1.0).sqrt();
    Ok((lhs >= rhs, lhs, rhs))
}

/// Refuses to run unless [`neumann_condition`] holds.
pub fn check_neumann_inverse(
    p: &ProblemModel,
    n: usize,
    lambda: f64,
    eta: f64,
    reps: usize,
    seed: u64,
) -> Result<CoverageReport> {
    check_common(n, eta, reps)?;
    let (ok, lhs, rhs) = neumann_condition(p, n, lambda, eta)?;
    if !ok {
        return Err(Error::Precondition(format!(
            "sqrt(n lambda) = {lhs:.4} is below 8 log(2/eta) sqrt(max(N, 1)) = {rhs:.4}"
        )));
    }
    let mu = normalized_eigenvalues(p);
    let stats = replicate_stats(seed, reps, |rng| {
        let (_, mut bx) = empirical_bx(p, &draw_design(p, n, rng));
        for j in 0..mu.len() {
            bx[(j, j)] += lambda;
        }
        let rhs = DMatrix::from_diagonal(&DVector::from_iterator(mu.len(), mu.iter().map(|m| m + lambda)));
        let prod = bx.cholesky().expect("B_x + lambda is positive definite").solve(&rhs);
        prod.singular_values().max()
    });
    Ok(tally(Bound::Neumann, n, Some(lambda), eta, 2.0, stats))
}

/// The constant `C_r` in `||B1^r - B2^r|| <= C_r ||B1 - B2||` (`r > 1`) or
/// `||B1^r - B2^r|| <= C_r ||B1 - B2||^r` (`r <= 1`) for spectra in
/// `[0, 1]`: `C_r = 1` for `r <= 1` and `r sum_n |c_n|` for `r > 1`, where
/// `c_n = (-1)^n binom(r - 1, n)` are the coefficients of `(1 - z)^{r-1}`.
///
/// With `a = r - 1` the signs of `c_n` settle at `(-1)^ceil(a)` from
/// `n = ceil(a)` on, and `sum_n c_n = (1 - 1)^a = 0`, so the series folds
/// into a finite sum.
pub fn series_constant(r: f64) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(invalid(format!("power r = {r} must be positive")));
    }
    if r <= 1.0 {
        return Ok(1.0);
    }
    let a = r - 1.0;
    let k = a.ceil() as usize;
    let mut c = 1.0;
    let (mut head_abs, mut head) = (0.0, 0.0);
    for n in 0..k {
        head_abs += f64::abs(c);
        head += c;
        c *= (n as f64 - a) / (n as f64 + 1.0);
    }
    let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    Ok(r * (head_abs - sign * head))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbationReport {
    pub r: f64,
    pub dim: usize,
    pub pairs: usize,
    pub max_ratio: f64,
    pub constant: f64,
}

impl PerturbationReport {
    pub fn passes(&self) -> bool {
        self.max_ratio <= self.constant
    }
}

/// `Q diag(u) Q^T` with Haar `Q` and `u` uniform on `[0, 1]`, returned with
/// its `r`-th power.
fn random_psd_pair<R: Rng + ?Sized>(dim: usize, r: f64, rng: &mut R) -> (DMatrix<f64>, DMatrix<f64>) {
    let q = random_orthogonal(dim, rng);
    let u: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    let make = |vals: Vec<f64>| {
        let m = &q * DMatrix::from_diagonal(&DVector::from_vec(vals)) * q.transpose();
        (&m + m.transpose()) * 0.5
    };
    (make(u.clone()), make(u.iter().map(|v| v.powf(r)).collect()))
}

pub fn perturbation_ratio(b1: &DMatrix<f64>, b1r: &DMatrix<f64>, b2: &DMatrix<f64>, b2r: &DMatrix<f64>, r: f64) -> f64 {
    let top = sym_spectral_norm(&(b1r - b2r));
    let diff = sym_spectral_norm(&(b1 - b2));
    if r > 1.0 {
        top / diff
    } else {
        top / diff.powf(r)
    }
}

pub fn check_power_perturbation(r: f64, dim: usize, pairs: usize, seed: u64) -> Result<PerturbationReport> {
    let constant = series_constant(r)?;
    if dim < 2 || pairs == 0 {
        return Err(invalid("need dim >= 2 and at least one pair"));
    }
    let max_ratio = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let mut rng = cell_rng(seed, i as u64);
            let (b1, b1r) = random_psd_pair(dim, r, &mut rng);
            let (b2, b2r) = random_psd_pair(dim, r, &mut rng);
            perturbation_ratio(&b1, &b1r, &b2, &b2r, r)
        })
        .reduce(|| 0.0, f64::max);
    Ok(PerturbationReport { r, dim, pairs, max_ratio, constant })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{synthesize_source, SourceRecipe};
    use rand::SeedableRng;

    fn small() -> ProblemModel {
        ProblemModel::differentiation(60).unwrap()
    }

    #[test]
    fn hs_deviation_covers_large_n() {
        let rep = check_operator_hs_deviation(&small(), 10_000, 0.1, 200, 1).unwrap();
        assert_eq!(rep.violations, 0);
    }

    #[test]
    fn hs_deviation_covers_single_point() {
        let rep = check_operator_hs_deviation(&small(), 1, 0.1, 500, 2).unwrap();
        assert!(rep.empirical_coverage >= 0.9);
        // both HS norms are at most their traces, which are at most one
        assert!(rep.max_statistic <= 2.0);
    }

    #[test]
    fn noise_and_weighted_bounds_cover() {
        let p = small();
        let f = synthesize_source(&p, 0.5, 1.0, &SourceRecipe::Geometric(0.5)).unwrap();
        let rep = check_noise_term(&p, &f, 200, 0.05, 0.2, NoiseModel::Gaussian, 0.1, 200, 3).unwrap();
        assert!(rep.passes(), "{rep:?}");
        let rep = check_noise_term(&p, &f, 200, 0.05, 0.2, NoiseModel::BoundedUniform, 0.1, 200, 3).unwrap();
        assert!(rep.passes(), "{rep:?}");
        let rep = check_weighted_operator_deviation(&p, 200, 0.05, 0.1, 200, 4).unwrap();
        assert!(rep.passes(), "{rep:?}");
    }

    #[test]
    fn neumann_refuses_without_condition() {
        let err = check_neumann_inverse(&small(), 500, 0.05, 0.1, 10, 5).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
        let (ok, _, _) = neumann_condition(&small(), 1200, 0.5, 0.1).unwrap();
        assert!(ok);
        let rep = check_neumann_inverse(&small(), 1200, 0.5, 0.1, 50, 5).unwrap();
        assert!(rep.passes());
    }

    #[test]
    fn series_constants() {
        assert_eq!(series_constant(0.5).unwrap(), 1.0);
        assert_eq!(series_constant(1.0).unwrap(), 1.0);
        // (1 - z)^1 and (1 - z)^2 have absolute coefficient sums 2 and 4
        assert!((series_constant(2.0).unwrap() - 4.0).abs() < 1e-15);
        assert!((series_constant(3.0).unwrap() - 12.0).abs() < 1e-15);
        assert!(series_constant(0.0).is_err());
    }

    #[test]
    fn series_constant_matches_partial_sums() {
        // direct summation: the terms decay like n^{-a-1}, so the tail after
        // N terms is about |c_N| (N / a + 1)
        for r in [1.5, 2.3, 3.7] {
            let a = r - 1.0;
            let mut c: f64 = 1.0;
            let mut sum = 0.0;
            let terms = 2_000_000;
            for n in 0..terms {
                sum += c.abs();
                c *= (n as f64 - a) / (n as f64 + 1.0);
            }
            let tail = 1.01 * c.abs() * (terms as f64 / a + 1.0);
            let closed = series_constant(r).unwrap() / r;
            assert!(closed >= sum - 1e-10 && closed <= sum + tail + 1e-10, "r={r}: {closed} vs {sum}+{tail}");
        }
    }

    #[test]
    fn identity_power_has_unit_ratio() {
        let rep = check_power_perturbation(1.0, 6, 200, 6).unwrap();
        assert!((rep.max_ratio - 1.0).abs() < 1e-9);
    }

    #[test]
    fn commuting_squares_are_two_lipschitz() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let a: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
            let b: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
            let diag = |v: &[f64]| DMatrix::from_diagonal(&DVector::from_column_slice(v));
            let sq = |v: &[f64]| v.iter().map(|x| x * x).collect::<Vec<_>>();
            let ratio = perturbation_ratio(&diag(&a), &diag(&sq(&a)), &diag(&b), &diag(&sq(&b)), 2.0);
            assert!(ratio <= 2.0 + 1e-12);
        }
    }

    #[test]
    fn perturbation_within_constant() {
        for r in [0.5, 1.5, 3.0] {
            let rep = check_power_perturbation(r, 8, 2000, 8).unwrap();
            assert!(rep.passes(), "{rep:?}");
        }
    }
}
