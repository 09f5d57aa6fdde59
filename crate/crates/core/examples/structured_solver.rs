//! The bridge kernel min(x, t) - x t admits O(n) solves. Compares the
//! structured and dense paths on the same data.

use std::time::Instant;

use invlearn::estimator::{fit_with, Solver};
use invlearn::problem::{synthesize_source, ProblemModel, SourceRecipe};
use invlearn::sampling::{draw_dataset, NoiseModel};
use invlearn::spectral::{make_regularizer, Method};

fn main() -> invlearn::Result<()> {
    let p = ProblemModel::differentiation(1000)?;
    let f = synthesize_source(&p, 0.5, 1.0, &SourceRecipe::Power(1.0))?;
    let data = draw_dataset(&p, &f, 1200, 0.1, NoiseModel::Gaussian, 5)?;
    let lambda = 1e-3;
    for method in [Method::Tikhonov, Method::Landweber, Method::SpectralCutoff] {
        let reg = make_regularizer(method, Some(1.0))?;
        let t0 = Instant::now();
        let dense = fit_with(&p, &data, &reg, lambda, Solver::Dense)?;
        let t_dense = t0.elapsed();
        let t0 = Instant::now();
        let fast = fit_with(&p, &data, &reg, lambda, Solver::Structured)?;
        let t_fast = t0.elapsed();
        let diff = dense.alpha.iter().zip(&fast.alpha).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = dense.alpha.iter().map(|a| a.abs()).fold(0.0, f64::max);
        println!(
            "{:>9}: dense {:>8.1?}, structured {:>8.1?}, max |diff| / max |alpha| = {:.2e}",
            method.id(),
            t_dense,
            t_fast,
            diff / scale
        );
    }
    Ok(())
}
