//! Effective dimension N(lambda) of the differentiation problem next to
//! the decay-class upper bounds and the empirical trace on a sample.

use invlearn::effdim::{
    classify_priors, effective_dimension, empirical_effective_dimension, integral_upper_bound, lemma_upper_bound,
};
use invlearn::problem::{synthesize_source, ProblemModel, SourceRecipe};
use invlearn::sampling::{draw_dataset, NoiseModel};

fn main() -> invlearn::Result<()> {
    let p = ProblemModel::differentiation(1000)?;
    let classes = classify_priors(&p, 2.0)?;
    println!(
        "alpha = {:.5}, beta = {:.5}, strong gamma = {:?}",
        classes.alpha_fit.unwrap_or(f64::NAN),
        classes.beta_fit.unwrap_or(f64::NAN),
        classes.strong_gamma
    );
    let beta = classes.beta_fit.unwrap_or(f64::NAN);

    let f = synthesize_source(&p, 0.5, 1.0, &SourceRecipe::Power(1.0))?;
    let xs = draw_dataset(&p, &f, 5000, 0.1, NoiseModel::Gaussian, 3)?.xs;

    println!("{:>8} {:>10} {:>10} {:>10} {:>10}", "lambda", "N", "lemma", "integral", "sample");
    for lambda in [1e-1, 1e-2, 1e-3, 1e-4] {
        let n = effective_dimension(&p, lambda)?;
        println!(
            "{:>8.0e} {:>10.3} {:>10.3} {:>10.3} {:>10.3}",
            lambda,
            n.value(),
            lemma_upper_bound(beta, 2.0, p.kappa_sq(), lambda),
            integral_upper_bound(beta, 2.0, p.kappa_sq(), lambda),
            empirical_effective_dimension(&p, &xs, lambda)?
        );
    }
    Ok(())
}
