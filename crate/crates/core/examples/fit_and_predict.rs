//! Draws one dataset, fits all three regularizers at the theoretical
//! lambda and reports L2 and s = 1/2 errors.

use invlearn::estimator::{error_norm, fit, lambda_rule, predict};
use invlearn::problem::{synthesize_source, ProblemModel, SourceRecipe};
use invlearn::sampling::{draw_dataset, NoiseModel};
use invlearn::spectral::{make_regularizer, Method};

fn main() -> invlearn::Result<()> {
    let p = ProblemModel::differentiation(1000)?;
    let f = synthesize_source(&p, 0.5, 1.0, &SourceRecipe::Power(1.0))?;
    let n = 2000;
    let data = draw_dataset(&p, &f, n, 0.1, NoiseModel::Gaussian, 42)?;
    let lambda = lambda_rule(0.1, 1.0, n, 2.0, 0.5)?;
    println!("n = {n}, lambda = {lambda:.4e}");

    for method in [Method::SpectralCutoff, Method::Tikhonov, Method::Landweber] {
        let reg = make_regularizer(method, Some(1.0))?;
        let est = fit(&p, &data, &reg, lambda)?;
        println!(
            "{:>10}: L2 error {:.4e}, s=1/2 error {:.4e}, g_hat(0.5) = {:.5}",
            method.id(),
            error_norm(&p, &f, &est, 0.0)?,
            error_norm(&p, &f, &est, 0.5)?,
            predict(&p, &est, 0.5)
        );
    }
    Ok(())
}
