//! Effective dimension `N(lambda) = tr((B + lambda)^{-1} B)` of the
//! normalized operator, eigenvalue-decay classes and the sample-size
//! condition of the main error bound.

use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::linalg::BridgeGram;
use crate::problem::ProblemModel;
use crate::sampling::build_empirical_operator;

/// Tolerance on the tail log-slope of `mu_j j^b` when deciding whether an
/// eigenvalue-decay class holds.
pub const CLASS_SLOPE_TOL: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveDimension {
    pub lambda: f64,
    /// `sum_{j <= J} mu_j / (mu_j + kappa^2 lambda)`.
    pub partial_sum: f64,
    /// Analytic bound on the terms `j > J` (zero for finite-rank tables).
    pub tail_bound: f64,
}

impl EffectiveDimension {
    pub fn value(&self) -> f64 {
        self.partial_sum
    }

    /// Guaranteed upper bound on the untruncated `N(lambda)`.
    pub fn upper(&self) -> f64 {
        self.partial_sum + self.tail_bound
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(invalid(format!("lambda = {lambda} outside (0, 1]")));
    }
    Ok(())
}

pub fn effective_dimension(p: &ProblemModel, lambda: f64) -> Result<EffectiveDimension> {
    check_lambda(lambda)?;
    let k2 = p.kappa_sq();
    let partial_sum = p
        .eigenvalues()
        .iter()
        .map(|&mu| (mu / k2) / (mu / k2 + lambda))
        .sum();
    let tail_bound = match p.eigenvalue_tail() {
        Some(tail) => {
            // sum_{j > J} a j^-b / (a j^-b + lambda) <= int_J^inf a t^-b / (a t^-b + lambda) dt
            let a = tail.scale / k2;
            let big_j = p.truncation() as f64;
            if tail.exponent == 2.0 {
                (a / lambda).sqrt() * (PI / 2.0 - (big_j * (lambda / a).sqrt()).atan())
            } else {
                a * big_j.powf(1.0 - tail.exponent) / (lambda * (tail.exponent - 1.0))
            }
        }
        None => 0.0,
    };
    Ok(EffectiveDimension { lambda, partial_sum, tail_bound })
}

/// `(beta b / (b - 1)) (kappa^2 lambda)^(-1/b)`, the closed-form upper bound
/// quoted for the class `mu_j <= beta j^-b`.
pub fn lemma_upper_bound(beta: f64, b: f64, kappa_sq: f64, lambda: f64) -> f64 {
    beta * b / (b - 1.0) * (kappa_sq * lambda).powf(-1.0 / b)
}

/// `(pi/b) / sin(pi/b) (beta / (kappa^2 lambda))^(1/b)`: the integral
/// `int_0^inf beta / (beta + kappa^2 lambda t^b) dt`, which dominates the
/// series whenever `mu_j <= beta j^-b`.
pub fn integral_upper_bound(beta: f64, b: f64, kappa_sq: f64, lambda: f64) -> f64 {
    (PI / b) / (PI / b).sin() * (beta / (kappa_sq * lambda)).powf(1.0 / b)
}

/// `N(lambda) >= 1/2` holds for `lambda <= mu_1 / kappa^2`.
pub fn lower_floor(p: &ProblemModel, lambda: f64) -> Option<f64> {
    (lambda <= p.eigenvalue(1) / p.kappa_sq()).then_some(0.5)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriorClassReport {
    pub b: f64,
    /// Largest `alpha` with `mu_j >= alpha j^-b` for all available `j`, when
    /// the lower class is established.
    pub alpha_fit: Option<f64>,
    /// Smallest `beta` with `mu_j <= beta j^-b`, when the upper class is
    /// established.
    pub beta_fit: Option<f64>,
    /// `mu_{2j} / mu_j >= 2^-gamma` for `j >= j0`.
    pub strong_gamma: Option<f64>,
    pub strong_j0: Option<usize>,
    /// Log-slope of `mu_j j^b` over the upper half of the spectrum.
    pub tail_slope: f64,
}

pub fn classify_priors(p: &ProblemModel, b: f64) -> Result<PriorClassReport> {
    if !(b > 1.0) {
        return Err(invalid(format!("ill-posedness b = {b} must exceed 1")));
    }
    let mu: Vec<f64> = p.eigenvalues().iter().copied().take_while(|&m| m > 0.0).collect();
    let count = mu.len();
    let weighted: Vec<f64> = mu
        .iter()
        .enumerate()
        .map(|(i, m)| m * ((i + 1) as f64).powf(b))
        .collect();
    let mut report = PriorClassReport {
        b,
        alpha_fit: None,
        beta_fit: None,
        strong_gamma: None,
        strong_j0: None,
        tail_slope: f64::NAN,
    };
    if count < 4 {
        return Ok(report);
    }
    let half = count / 2;
    report.tail_slope = (weighted[count - 1] / weighted[half - 1]).ln() / (count as f64 / half as f64).ln();
    if report.tail_slope <= CLASS_SLOPE_TOL {
        report.beta_fit = Some(weighted.iter().copied().fold(f64::MIN, f64::max));
    }
    if report.tail_slope >= -CLASS_SLOPE_TOL {
        report.alpha_fit = Some(weighted.iter().copied().fold(f64::MAX, f64::min));
        let min_ratio = (1..=half)
            .map(|j| mu[2 * j - 1] / mu[j - 1])
            .fold(f64::MAX, f64::min);
        let mut gamma = -min_ratio.log2();
        if (gamma - gamma.round()).abs() < 1e-9 {
            gamma = gamma.round();
        }
        report.strong_gamma = Some(gamma);
        report.strong_j0 = Some(1);
    }
    Ok(report)
}

/// `ceil(64 lambda^-1 max(N, 1) log^2(8 / eta))` for a given `N`.
pub fn admissible_n_for(lambda: f64, eff_dim: f64, eta: f64) -> Result<u64> {
    check_lambda(lambda)?;
    if !(eta > 0.0 && eta < 8.0) {
        return Err(invalid(format!("confidence eta = {eta} must lie in (0, 8)")));
    }
    let log = (8.0 / eta).ln();
    Ok((64.0 / lambda * eff_dim.max(1.0) * log * log).ceil() as u64)
}

/// Smallest `n` satisfying the sample-size condition, with `N(lambda)`
/// replaced by its guaranteed upper bound.
pub fn admissible_n(p: &ProblemModel, lambda: f64, eta: f64) -> Result<u64> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(invalid(format!("confidence eta = {eta} outside (0, 1)")));
    }
    admissible_n_for(lambda, effective_dimension(p, lambda)?.upper(), eta)
}

/// `tr((T + lambda)^{-1} T)` for the empirical `T = K_n / (n kappa^2)`.
pub fn empirical_effective_dimension(p: &ProblemModel, xs: &[f64], lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if p.has_bridge_structure() {
        let op = BridgeGram::new(xs, 1.0 / (xs.len() as f64 * p.kappa_sq()))?;
        return Ok(op.resolvent_trace(lambda));
    }
    let emp = build_empirical_operator(p, xs)?;
    Ok(emp
        .t
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|&t| t.max(0.0) / (t.max(0.0) + lambda))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn diff() -> ProblemModel {
        ProblemModel::differentiation(1000).unwrap()
    }

    #[test]
    fn unit_lambda_is_between_zero_and_trace() {
        let p = diff();
        let n = effective_dimension(&p, 1.0).unwrap().value();
        let trace: f64 = p.eigenvalues().iter().map(|m| m / p.kappa_sq()).sum();
        assert!(n > 0.0 && n < trace);
        assert!(effective_dimension(&p, 1.0).unwrap().value() < effective_dimension(&p, 0.5).unwrap().value());
    }

    #[test]
    fn floor_of_one_half() {
        let p = diff();
        let top = p.eigenvalue(1) / p.kappa_sq();
        assert!((top - 4.0 / (PI * PI)).abs() < 1e-15);
        for lambda in [top, 0.1, 1e-3, 1e-5] {
            assert!(effective_dimension(&p, lambda).unwrap().value() >= 0.5);
            assert_eq!(lower_floor(&p, lambda), Some(0.5));
        }
        assert_eq!(lower_floor(&p, 0.5), None);
    }

    #[test]
    fn tail_bound_brackets_long_sum() {
        let short = ProblemModel::differentiation(200).unwrap();
        let long = ProblemModel::differentiation(200_000).unwrap();
        for lambda in [0.1, 1e-3, 1e-5] {
            let s = effective_dimension(&short, lambda).unwrap();
            let l = effective_dimension(&long, lambda).unwrap();
            assert!(s.value() <= l.value());
            assert!(l.value() <= s.upper() + 1e-9);
        }
    }

    #[test]
    fn sharp_bound_dominates() {
        let p = diff();
        let beta = 1.0 / (PI * PI);
        for lambda in [1e-1, 1e-2, 1e-3, 1e-4, 1e-5] {
            let n = effective_dimension(&p, lambda).unwrap().upper();
            assert!(n <= integral_upper_bound(beta, 2.0, 0.25, lambda));
        }
        // for b = 2 the integral bound is 1/sqrt(lambda) here
        assert!((integral_upper_bound(beta, 2.0, 0.25, 0.01) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn differentiation_classes() {
        let p = diff();
        let rep = classify_priors(&p, 2.0).unwrap();
        let target = 1.0 / (PI * PI);
        assert!((rep.alpha_fit.unwrap() - target).abs() < 1e-15);
        assert!((rep.beta_fit.unwrap() - target).abs() < 1e-15);
        assert_eq!(rep.strong_gamma, Some(2.0));
        assert_eq!(rep.strong_j0, Some(1));

        let rep = classify_priors(&p, 1.5).unwrap();
        assert!(rep.beta_fit.is_some());
        assert!(rep.alpha_fit.is_none());
        assert!(rep.strong_gamma.is_none());
        assert!(classify_priors(&p, 1.0).is_err());
    }

    #[test]
    fn admissibility_examples() {
        // log(8 / eta) = 1 and N <= 1 at lambda = 1
        let eta = 8.0 / std::f64::consts::E;
        let n1 = effective_dimension(&diff(), 1.0).unwrap().upper();
        assert!(n1 <= 1.0);
        assert_eq!(admissible_n_for(1.0, n1, eta).unwrap(), 64);
        assert!(admissible_n(&diff(), 0.5, 1.5).is_err());

        let p = diff();
        let got = admissible_n(&p, 0.01, 0.05).unwrap();
        let direct: f64 = (1..=2_000_000)
            .map(|j| {
                let m = 4.0 / (PI * PI * (j as f64).powi(2));
                m / (m + 0.01)
            })
            .sum();
        let log = (8.0f64 / 0.05).ln();
        let want = 64.0 / 0.01 * direct * log * log;
        assert!((got as f64 - want).abs() / want < 1e-4, "{got} vs {want}");
    }

    #[test]
    fn halving_lambda_at_least_doubles_n() {
        let p = diff();
        let mut lambda: f64 = 1.0;
        let mut last = admissible_n(&p, lambda, 0.1).unwrap();
        for _ in 0..12 {
            lambda /= 2.0;
            let next = admissible_n(&p, lambda, 0.1).unwrap();
            assert!(next + 1 >= 2 * last);
            last = next;
        }
    }

    #[test]
    fn empirical_matches_dense_for_tables() {
        let grid: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
        let rows: Vec<Vec<f64>> = (1..=3)
            .map(|j| grid.iter().map(|x| (PI * j as f64 * x).sin() / j as f64).collect())
            .collect();
        let p = ProblemModel::from_table("t", grid, vec![0.5, 0.2, 0.05], rows).unwrap();
        let xs = [0.1, 0.4, 0.45, 0.9];
        let v = empirical_effective_dimension(&p, &xs, 0.1).unwrap();
        assert!(v > 0.0 && v <= 3.0 + 1e-12);
    }

    proptest! {
        #[test]
        fn nonincreasing_in_lambda(a in 1e-6f64..1.0, b in 1e-6f64..1.0) {
            let p = ProblemModel::differentiation(300).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let n_lo = effective_dimension(&p, lo).unwrap();
            let n_hi = effective_dimension(&p, hi).unwrap();
            prop_assert!(n_lo.value() >= n_hi.value());
            prop_assert!(n_lo.upper() >= n_hi.upper());
        }
    }
}
