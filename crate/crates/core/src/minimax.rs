//! Lower-bound machinery: Rademacher codebooks, packing sets
//! `f_i = B^r g_i` in the source set, their KL divergences and the Fano
//! budget at the recipe sample size.

use rand::Rng;

use crate::effdim::classify_priors;
use crate::error::{invalid, Error, Result};
use crate::estimator::theoretical_rate;
use crate::problem::{ProblemModel, SourceFunction};

pub const MIN_CODE_LENGTH: usize = 28;
pub const DEFAULT_MAX_TRIES: usize = 1_000_000;
/// Fano's lemma needs `omega < 1/8`.
pub const OMEGA_MAX: f64 = 0.125;

/// Sign vectors in `{-1, +1}^m` with pairwise squared distance at least `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    pub m: usize,
    pub words: Vec<Vec<i8>>,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// `sum_l (e_i^l - e_j^l)^2`.
    pub fn squared_distance(&self, i: usize, j: usize) -> u32 {
        self.words[i]
            .iter()
            .zip(&self.words[j])
            .map(|(&a, &b)| ((a - b) as i32).pow(2) as u32)
            .sum()
    }

    pub fn hamming(&self, i: usize, j: usize) -> u32 {
        self.words[i]
            .iter()
            .zip(&self.words[j])
            .filter(|(a, b)| a != b)
            .count() as u32
    }

    pub fn min_squared_distance(&self) -> u32 {
        let mut best = u32::MAX;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                best = best.min(self.squared_distance(i, j));
            }
        }
        best
    }

    /// Both codebook properties: pairwise squared distance `>= m` and
    /// `log(N - 1) > m / 36`.
    pub fn check_invariants(&self) -> Result<()> {
        if self.len() < 2 || self.min_squared_distance() < self.m as u32 {
            return Err(Error::Consistency("codebook separation below m".into()));
        }
        if !(((self.len() - 1) as f64).ln() > self.m as f64 / 36.0) {
            return Err(Error::Consistency("codebook too small: log(N - 1) <= m/36".into()));
        }
        Ok(())
    }
}

/// `floor(exp(m / 36)) + 2`, the smallest size with `log(N - 1) > m / 36`.
pub fn codebook_target(m: usize) -> usize {
    (m as f64 / 36.0).exp().floor() as usize + 2
}

/// Rejection search: keeps uniform sign vectors at squared distance `>= m`
/// from every kept word until the target size is reached.
pub fn build_codebook<R: Rng + ?Sized>(m: usize, max_tries: usize, rng: &mut R) -> Result<Codebook> {
    search_codebook(m, m as u32, max_tries, rng)
}

/// As [`build_codebook`] with strictly larger separation, `> m`.
pub fn build_codebook_strict<R: Rng + ?Sized>(m: usize, max_tries: usize, rng: &mut R) -> Result<Codebook> {
    search_codebook(m, m as u32 + 1, max_tries, rng)
}

fn search_codebook<R: Rng + ?Sized>(m: usize, min_sq: u32, max_tries: usize, rng: &mut R) -> Result<Codebook> {
    if m < MIN_CODE_LENGTH {
        return Err(invalid(format!("code length {m} below {MIN_CODE_LENGTH}")));
    }
    let target = codebook_target(m);
    let mut words: Vec<Vec<i8>> = Vec::with_capacity(target);
    for _ in 0..max_tries {
        let cand: Vec<i8> = (0..m).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        // (a - b)^2 is 4 where signs differ
        let ok = words.iter().all(|w| {
            4 * w.iter().zip(&cand).filter(|(a, b)| a != b).count() as u32 >= min_sq
        });
        if ok {
            words.push(cand);
            if words.len() == target {
                return Ok(Codebook { m, words });
            }
        }
    }
    Err(Error::SearchExhausted { tries: max_tries, found: words.len(), target })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PackingBranch {
    /// `mu_{2l} >= 2^-gamma mu_l` for `l >= j0`.
    Strong { gamma: f64, j0: usize },
    /// Only the lower decay bound; `m` is found by a doubling scan.
    Weak,
}

#[derive(Clone, Debug)]
pub struct PackingSet {
    pub eps: f64,
    pub m: usize,
    pub codebook: Codebook,
    /// `f_i = B^r g_i`.
    pub fs: Vec<SourceFunction>,
    pub r: f64,
    pub s: f64,
    pub radius: f64,
    pub sigma: f64,
    /// Lower decay constant `alpha` and exponent `b`.
    pub alpha: f64,
    pub b: f64,
    /// Doubling exponent in force (`b + 1` on the weak branch).
    pub gamma: f64,
    pub branch: PackingBranch,
}

/// Upper limit on `eps` for the strong-class construction:
/// `R 2^{-gamma (r+s)} (alpha^{1/b} / max(28, j0))^{b (r+s)}`.
pub fn strong_eps_limit(alpha: f64, b: f64, gamma: f64, j0: usize, r: f64, s: f64, radius: f64) -> f64 {
    let q = r + s;
    radius * 2f64.powf(-gamma * q) * (alpha.powf(1.0 / b) / MIN_CODE_LENGTH.max(j0) as f64).powf(b * q)
}

/// Builds the packing on modes `(m, 2m]`. Uses the strong-class branch
/// when the spectrum supports it and the weak branch otherwise.
#[allow(clippy::too_many_arguments)]
pub fn build_packing<R: Rng + ?Sized>(
    p: &ProblemModel,
    b: f64,
    r: f64,
    s: f64,
    radius: f64,
    eps: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<PackingSet> {
    if !(r > 0.0) || !(0.0..=0.5).contains(&s) || !(radius > 0.0) || !(eps > 0.0) || !(sigma > 0.0) {
        return Err(invalid("packing needs r > 0, s in [0, 1/2] and positive R, eps, sigma"));
    }
    let classes = classify_priors(p, b)?;
    let alpha = classes
        .alpha_fit
        .ok_or_else(|| Error::Precondition(format!("lower decay class with b = {b} not established")))?;
    let branch = match (classes.strong_gamma, classes.strong_j0) {
        (Some(gamma), Some(j0)) => PackingBranch::Strong { gamma, j0 },
        _ => PackingBranch::Weak,
    };
    build_packing_on(p, b, alpha, branch, r, s, radius, eps, sigma, rng)
}

#[allow(clippy::too_many_arguments)]
pub fn build_packing_on<R: Rng + ?Sized>(
    p: &ProblemModel,
    b: f64,
    alpha: f64,
    branch: PackingBranch,
    r: f64,
    s: f64,
    radius: f64,
    eps: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<PackingSet> {
    let mu = p.eigenvalues();
    let big_j = mu.len();
    let q = r + s;
    let (m, eps, gamma) = match branch {
        PackingBranch::Strong { gamma, j0 } => {
            let level = 2f64.powf(gamma) * (eps / radius).powf(1.0 / q);
            let m = mu.iter().rposition(|&v| v >= level).map_or(0, |i| i + 1);
            if m < MIN_CODE_LENGTH.max(j0) {
                return Err(Error::EpsTooLarge { eps });
            }
            if m == big_j || 2 * m > big_j {
                return Err(Error::TruncationTooSmall { truncation: big_j, needed: 2 * m + 1 });
            }
            (m, eps, gamma)
        }
        PackingBranch::Weak => {
            let small = 2f64.powf(b + 1.0) * (eps / radius).powf(1.0 / q);
            let m = (MIN_CODE_LENGTH..=big_j / 2)
                .find(|&m| mu[m - 1] <= small && mu[2 * m - 1] / mu[m - 1] >= 2f64.powf(-b - 1.0))
                .ok_or(Error::TruncationTooSmall { truncation: big_j, needed: 2 * big_j })?;
            let eps = 2f64.powf(-(b + 1.0) * q) * radius * mu[m - 1].powf(q);
            (m, eps, b + 1.0)
        }
    };

    let codebook = build_codebook_strict(m, DEFAULT_MAX_TRIES, rng)?;
    let scale = eps / (m as f64).sqrt();
    let mut fs = Vec::with_capacity(codebook.len());
    for (i, word) in codebook.words.iter().enumerate() {
        let mut coeffs = vec![0.0; big_j];
        let mut g_sq = 0.0;
        for (k, &sign) in word.iter().enumerate() {
            let l = m + 1 + k;
            let g = scale * sign as f64 * mu[l - 1].powf(-q);
            g_sq += g * g;
            coeffs[l - 1] = mu[l - 1].powf(r) * g;
        }
        let h_norm = g_sq.sqrt();
        if h_norm > radius {
            return Err(Error::RadiusViolation { norm: h_norm, radius });
        }
        fs.push(SourceFunction { coeffs, r, radius, h_norm, label: format!("packing:{i}") });
    }
    let set = PackingSet { eps, m, codebook, fs, r, s, radius, sigma, alpha, b, gamma, branch };
    let sep = min_separation_sq(p, &set);
    if !(sep > eps * eps) {
        return Err(Error::Consistency(format!("packing separation {sep} not above eps^2 = {}", eps * eps)));
    }
    Ok(set)
}

/// `||B^s (f_i - f_j)||^2`.
pub fn separation_sq(p: &ProblemModel, fi: &SourceFunction, fj: &SourceFunction, s: f64) -> f64 {
    p.eigenvalues()
        .iter()
        .zip(fi.coeffs.iter().zip(&fj.coeffs))
        .map(|(&mu, (a, b))| mu.powf(2.0 * s) * (a - b).powi(2))
        .sum()
}

pub fn min_separation_sq(p: &ProblemModel, set: &PackingSet) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..set.fs.len() {
        for j in i + 1..set.fs.len() {
            best = best.min(separation_sq(p, &set.fs[i], &set.fs[j], set.s));
        }
    }
    best
}

/// `(1 / (2 sigma^2)) ||B^{1/2} (f_i - f_j)||^2`.
pub fn kl_divergence(p: &ProblemModel, fi: &SourceFunction, fj: &SourceFunction, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(invalid("sigma must be positive"));
    }
    Ok(separation_sq(p, fi, fj, 0.5) / (2.0 * sigma * sigma))
}

pub fn max_kl(p: &ProblemModel, set: &PackingSet) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..set.fs.len() {
        for j in i + 1..set.fs.len() {
            best = best.max(separation_sq(p, &set.fs[i], &set.fs[j], 0.5));
        }
    }
    best / (2.0 * set.sigma * set.sigma)
}

/// `2^{1 + gamma (1 - 2s)} sigma^-2 R^2 (eps / R)^{(1 + 2r) / (r + s)}`.
pub fn kl_bound(set: &PackingSet) -> f64 {
    let PackingSet { gamma, s, r, sigma, radius, eps, .. } = *set;
    2f64.powf(1.0 + gamma * (1.0 - 2.0 * s)) / (sigma * sigma)
        * radius
        * radius
        * (eps / radius).powf((1.0 + 2.0 * r) / (r + s))
}

/// `(alpha^{1/b} / 36) 2^{-2 gamma / b} (R / eps)^{1 / (b (r + s))}`.
pub fn log_size_bound(set: &PackingSet) -> f64 {
    let PackingSet { alpha, b, gamma, r, s, radius, eps, .. } = *set;
    alpha.powf(1.0 / b) / 36.0 * 2f64.powf(-2.0 * gamma / b) * (radius / eps).powf(1.0 / (b * (r + s)))
}

/// Sample size at which the bound chain gives `omega <= 1/8`:
/// `floor(1 / (8 C R^2 sigma^-2 (eps/R)^{(2br + b + 1) / (b (r+s))}))` with
/// `C` the KL constant divided by the log-size constant.
pub fn recipe_n(set: &PackingSet) -> u64 {
    let PackingSet { alpha, b, gamma, r, s, radius, eps, sigma, .. } = *set;
    let c = 2f64.powf(1.0 + gamma * (1.0 - 2.0 * s)) * 36.0 * 2f64.powf(2.0 * gamma / b) * alpha.powf(-1.0 / b);
    let exponent = (2.0 * b * r + b + 1.0) / (b * (r + s));
    let denom = 8.0 * c * radius * radius / (sigma * sigma) * (eps / radius).powf(exponent);
    (1.0 / denom).floor() as u64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FanoBudget {
    /// `n (1/(N-1)) sum_{j < N} KL(rho_j, rho_N)`.
    pub n_avg_kl: f64,
    pub log_n_minus_1: f64,
    pub omega: f64,
}

impl FanoBudget {
    pub fn admissible(&self) -> bool {
        self.omega <= OMEGA_MAX
    }
}

pub fn fano_budget(p: &ProblemModel, set: &PackingSet, n: u64) -> FanoBudget {
    let count = set.fs.len();
    let last = &set.fs[count - 1];
    let avg: f64 = set.fs[..count - 1]
        .iter()
        .map(|f| separation_sq(p, f, last, 0.5) / (2.0 * set.sigma * set.sigma))
        .sum::<f64>()
        / (count - 1) as f64;
    let log_n_minus_1 = ((count - 1) as f64).ln();
    let n_avg_kl = n as f64 * avg;
    FanoBudget { n_avg_kl, log_n_minus_1, omega: n_avg_kl / log_n_minus_1 }
}

/// The lower rate, which coincides with the upper rate sequence.
pub fn lower_rate(sigma: f64, radius: f64, n: usize, b: f64, r: f64, s: f64) -> Result<f64> {
    theoretical_rate(sigma, radius, n, b, r, s)
}

/// Exact coefficient-space verification of a packing: separation above
/// `eps^2`, every `||h_i|| <= R`, and `omega <= 1/8` at the recipe `n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PackingCheck {
    pub min_separation_sq: f64,
    pub max_h_norm: f64,
    pub recipe_n: u64,
    pub budget: FanoBudget,
    pub max_kl: f64,
}

impl PackingCheck {
    pub fn passes(&self, set: &PackingSet) -> bool {
        self.min_separation_sq > set.eps * set.eps
            && self.max_h_norm <= set.radius
            && self.budget.admissible()
    }
}

pub fn check_packing(p: &ProblemModel, set: &PackingSet) -> PackingCheck {
    let n = recipe_n(set);
    PackingCheck {
        min_separation_sq: min_separation_sq(p, set),
        max_h_norm: set.fs.iter().map(|f| f.source_norm(p)).fold(0.0, f64::max),
        recipe_n: n,
        budget: fano_budget(p, set, n),
        max_kl: max_kl(p, set),
    }
}
