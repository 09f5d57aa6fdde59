//! Empirical coverage of the concentration inequalities at a moderate
//! sample size.

use invlearn::concentration::{
    check_neumann_inverse, check_noise_term, check_operator_hs_deviation, check_weighted_operator_deviation,
    neumann_condition, CoverageReport,
};
use invlearn::effdim::admissible_n;
use invlearn::problem::{synthesize_source, ProblemModel, SourceRecipe};
use invlearn::sampling::NoiseModel;

fn show(rep: &CoverageReport) {
    println!(
        "{:>20}: {}/{} violations, coverage {:.3} (need {:.3}), max stat {:.3e} vs {:.3e}",
        rep.bound.id(),
        rep.violations,
        rep.replicates,
        rep.empirical_coverage,
        rep.required_coverage(),
        rep.max_statistic,
        rep.threshold
    );
}

fn main() -> invlearn::Result<()> {
    let p = ProblemModel::differentiation(200)?;
    let f = synthesize_source(&p, 0.5, 1.0, &SourceRecipe::Power(1.0))?;
    let (n, lambda, eta, reps) = (500, 0.05, 0.1, 200);

    show(&check_operator_hs_deviation(&p, n, eta, reps, 1)?);
    show(&check_noise_term(&p, &f, n, lambda, 0.1, NoiseModel::Gaussian, eta, reps, 2)?);
    show(&check_weighted_operator_deviation(&p, n, lambda, eta, reps, 3)?);

    let (ok, lhs, rhs) = neumann_condition(&p, n, lambda, eta)?;
    println!("neumann condition at n = {n}: {lhs:.2} >= {rhs:.2}? {ok}");
    let lambda = 0.5;
    let n_ok = admissible_n(&p, lambda, eta)? as usize;
    println!("smallest admissible n at lambda = {lambda}: {n_ok}");
    show(&check_neumann_inverse(&p, n_ok, lambda, eta, reps, 4)?);
    Ok(())
}
