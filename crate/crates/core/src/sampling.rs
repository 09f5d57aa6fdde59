//! Random datasets `y_i = (Af)(x_i) + eps_i` and the empirical kernel
//! matrices built from their design points.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::problem::{forward_values, ProblemModel, SourceFunction};

/// Tolerance on negative eigenvalues of a Gram matrix.
pub const PSD_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseModel {
    Gaussian,
    /// Uniform on `[-sigma sqrt 3, sigma sqrt 3]`, which has variance `sigma^2`.
    BoundedUniform,
}

impl NoiseModel {
    /// The Bernstein moment constant `M` recorded with the data.
    pub fn bernstein_m(self, sigma: f64) -> f64 {
        match self {
            NoiseModel::Gaussian => sigma,
            NoiseModel::BoundedUniform => sigma * 3f64.sqrt(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(self, sigma: f64, rng: &mut R) -> f64 {
        match self {
            NoiseModel::Gaussian => sigma * rng.sample::<f64, _>(StandardNormal),
            NoiseModel::BoundedUniform => sigma * 3f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0),
        }
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseModel::Gaussian => "gaussian",
            NoiseModel::BoundedUniform => "uniform",
        })
    }
}

impl FromStr for NoiseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(NoiseModel::Gaussian),
            "uniform" | "bounded-uniform" | "bounded_uniform" => Ok(NoiseModel::BoundedUniform),
            other => Err(invalid(format!("unknown noise model `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub sigma: f64,
    pub noise_model: NoiseModel,
    /// Bernstein constant `M` of the noise.
    pub m: f64,
    pub seed: u64,
    pub truth_id: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Writes `x,y` rows under `#` comment lines carrying the metadata.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# seed={}", self.seed)?;
        writeln!(out, "# sigma={}", self.sigma)?;
        writeln!(out, "# noise_model={}", self.noise_model)?;
        writeln!(out, "# n={}", self.len())?;
        writeln!(out, "# truth={}", self.truth_id)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y"])?;
        for (x, y) in self.xs.iter().zip(&self.ys) {
            w.write_record([format!("{x:e}"), format!("{y:e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut comments = Vec::new();
        let mut body = String::new();
        for line in BufReader::new(input).lines() {
            let line = line?;
            match line.strip_prefix('#') {
                Some(c) => comments.push(c.trim().to_string()),
                None => {
                    body.push_str(&line);
                    body.push('\n');
                }
            }
        }
        let meta = |key: &str| {
            comments
                .iter()
                .find_map(|c| c.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
                .map(str::trim)
        };
        let parse_num = |key: &str| -> Result<f64> {
            meta(key)
                .ok_or_else(|| invalid(format!("dataset header lacks `{key}`")))?
                .parse()
                .map_err(|_| invalid(format!("dataset header `{key}` is not a number")))
        };
        let sigma = parse_num("sigma")?;
        let noise_model: NoiseModel = meta("noise_model").unwrap_or("gaussian").parse()?;
        let seed = meta("seed").and_then(|v| v.parse().ok()).unwrap_or(0);
        let truth_id = meta("truth").unwrap_or("").to_string();

        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        for rec in rdr.deserialize() {
            let (x, y): (f64, f64) = rec?;
            xs.push(x);
            ys.push(y);
        }
        if xs.is_empty() {
            return Err(invalid("dataset has no rows"));
        }
        if let Some(n) = meta("n").and_then(|v| v.parse::<usize>().ok()) {
            if n != xs.len() {
                return Err(invalid(format!("header says n={n} but {} rows present", xs.len())));
            }
        }
        Ok(Self { xs, ys, sigma, m: noise_model.bernstein_m(sigma), noise_model, seed, truth_id })
    }
}

/// An RNG for one cell of an experiment: stream `stream` of the ChaCha
/// generator keyed by `master`. Cells never share a stream, so results do
/// not depend on scheduling.
pub fn cell_rng(master: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

/// Stream id for replicate `rep` at grid position `index`.
pub fn cell_stream(index: usize, rep: usize) -> u64 {
    ((index as u64) << 32) | rep as u64
}

/// Draws `n` i.i.d. pairs from the model with the given noise.
pub fn draw_dataset(
    p: &ProblemModel,
    f: &SourceFunction,
    n: usize,
    sigma: f64,
    noise_model: NoiseModel,
    seed: u64,
) -> Result<Dataset> {
    draw_dataset_with(p, f, n, sigma, noise_model, &mut ChaCha8Rng::seed_from_u64(seed), seed)
}

/// Like [`draw_dataset`] with a caller-provided generator; `seed` is only
/// recorded.
pub fn draw_dataset_with<R: Rng + ?Sized>(
    p: &ProblemModel,
    f: &SourceFunction,
    n: usize,
    sigma: f64,
    noise_model: NoiseModel,
    rng: &mut R,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(invalid("sample size must be at least 1"));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(invalid("noise level must be finite and nonnegative"));
    }
    let xs: Vec<f64> = (0..n).map(|_| p.design().sample(rng)).collect();
    let mut ys = forward_values(p, f, &xs);
    for y in ys.iter_mut() {
        *y += noise_model.sample(sigma, rng);
    }
    Ok(Dataset {
        xs,
        ys,
        sigma,
        noise_model,
        m: noise_model.bernstein_m(sigma),
        seed,
        truth_id: f.label.clone(),
    })
}

/// `K_n = [K(x_i, x_j)]` and `T = K_n / (n kappa^2)`.
#[derive(Clone, Debug)]
pub struct EmpiricalOperator {
    pub k: DMatrix<f64>,
    pub t: DMatrix<f64>,
}

pub fn kernel_matrix(p: &ProblemModel, xs: &[f64]) -> DMatrix<f64> {
    let n = xs.len();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = p.kernel(xs[i], xs[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

pub fn build_empirical_operator(p: &ProblemModel, xs: &[f64]) -> Result<EmpiricalOperator> {
    if xs.is_empty() {
        return Err(invalid("design is empty"));
    }
    let (lo, hi) = p.domain();
    if xs.iter().any(|x| !(lo..=hi).contains(x)) {
        return Err(invalid(format!("design points must lie in [{lo}, {hi}]")));
    }
    let k = kernel_matrix(p, xs);
    let min_eigenvalue = k.clone().symmetric_eigen().eigenvalues.min();
    if min_eigenvalue < -PSD_TOL {
        return Err(Error::NotPsd { min_eigenvalue });
    }
    let t = &k / (xs.len() as f64 * p.kappa_sq());
    Ok(EmpiricalOperator { k, t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_spectral_norm;
    use crate::problem::{synthesize_source, SourceRecipe};

    fn setup() -> (ProblemModel, SourceFunction) {
        let p = ProblemModel::differentiation(200).unwrap();
        let f = synthesize_source(&p, 0.5, 1.0, &SourceRecipe::Geometric(0.5)).unwrap();
        (p, f)
    }

    #[test]
    fn noiseless_data_is_exact() {
        let (p, f) = setup();
        let d = draw_dataset(&p, &f, 20, 0.0, NoiseModel::Gaussian, 3).unwrap();
        for (x, y) in d.xs.iter().zip(&d.ys) {
            assert_eq!(*y, crate::problem::forward_value(&p, &f, *x));
        }
    }

    #[test]
    fn seeded_draws_repeat() {
        let (p, f) = setup();
        let a = draw_dataset(&p, &f, 5, 0.1, NoiseModel::Gaussian, 11).unwrap();
        let b = draw_dataset(&p, &f, 5, 0.1, NoiseModel::Gaussian, 11).unwrap();
        assert_eq!(a, b);
        let c = draw_dataset(&p, &f, 5, 0.1, NoiseModel::Gaussian, 12).unwrap();
        assert_ne!(a.xs, c.xs);
    }

    #[test]
    fn noise_mean_is_clt_small() {
        let n = 1_000_000;
        let sigma = 0.3;
        for model in [NoiseModel::Gaussian, NoiseModel::BoundedUniform] {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mean: f64 = (0..n).map(|_| model.sample(sigma, &mut rng)).sum::<f64>() / n as f64;
            assert!(mean.abs() <= 4.0 * sigma / (n as f64).sqrt(), "{model}: {mean}");
        }
    }

    #[test]
    fn bounded_uniform_variance_and_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sigma = 0.5;
        let draws: Vec<f64> = (0..200_000)
            .map(|_| NoiseModel::BoundedUniform.sample(sigma, &mut rng))
            .collect();
        let var = draws.iter().map(|e| e * e).sum::<f64>() / draws.len() as f64;
        assert!((var - sigma * sigma).abs() < 0.01 * sigma * sigma * 3.0);
        let bound = NoiseModel::BoundedUniform.bernstein_m(sigma);
        assert!(draws.iter().all(|e| e.abs() <= bound));
    }

    #[test]
    fn single_point_operator() {
        let p = ProblemModel::differentiation(10).unwrap();
        let op = build_empirical_operator(&p, &[0.5]).unwrap();
        assert!((op.k[(0, 0)] - 0.25).abs() < 1e-15);
        assert!((op.t[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn repeated_points_are_accepted() {
        let p = ProblemModel::differentiation(10).unwrap();
        let op = build_empirical_operator(&p, &[0.3, 0.3, 0.7]).unwrap();
        assert!(op.k.clone().determinant().abs() < 1e-14);
    }

    #[test]
    fn operator_rejects_points_outside_domain() {
        let p = ProblemModel::differentiation(10).unwrap();
        assert!(build_empirical_operator(&p, &[0.3, 1.2]).is_err());
        assert!(build_empirical_operator(&p, &[]).is_err());
    }

    #[test]
    fn operator_norm_and_trace_at_most_one() {
        let (p, f) = setup();
        for seed in 0..5 {
            let d = draw_dataset(&p, &f, 60, 0.1, NoiseModel::Gaussian, seed).unwrap();
            let op = build_empirical_operator(&p, &d.xs).unwrap();
            assert!(op.t.trace() <= 1.0 + 1e-12);
            assert!(sym_spectral_norm(&op.t) <= 1.0 + 1e-10);
        }
    }

    #[test]
    fn gram_matches_truncated_features() {
        let (p, f) = setup();
        let d = draw_dataset(&p, &f, 25, 0.1, NoiseModel::Gaussian, 4).unwrap();
        let k = kernel_matrix(&p, &d.xs);
        let tail = p.kernel_tail_bound().unwrap();
        let mut a = vec![0.0; 200];
        let mut b = vec![0.0; 200];
        for i in 0..25 {
            p.feature_row(d.xs[i], &mut a);
            for j in 0..25 {
                p.feature_row(d.xs[j], &mut b);
                let truncated: f64 = a.iter().zip(&b).map(|(u, v)| u * v).sum();
                assert!((k[(i, j)] - truncated).abs() <= tail);
            }
        }
    }

    #[test]
    fn csv_roundtrip() {
        let (p, f) = setup();
        let d = draw_dataset(&p, &f, 12, 0.2, NoiseModel::BoundedUniform, 99).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn cell_streams_are_distinct_and_stable() {
        let a: u64 = cell_rng(7, cell_stream(0, 1)).random();
        let b: u64 = cell_rng(7, cell_stream(1, 0)).random();
        let c: u64 = cell_rng(7, cell_stream(0, 1)).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
