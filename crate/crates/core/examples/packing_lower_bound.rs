//! Builds the packing set behind the minimax lower bound and checks
//! separation, radius, the KL budget and the Fano condition.

use invlearn::minimax::{build_packing, check_packing, kl_bound, lower_rate, OMEGA_MAX};
use invlearn::problem::ProblemModel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> invlearn::Result<()> {
    let p = ProblemModel::differentiation(1000)?;
    let (r, s, radius, sigma) = (0.5, 0.0, 1.0, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for eps in [2e-3, 1e-3] {
        let set = build_packing(&p, 2.0, r, s, radius, eps, sigma, &mut rng)?;
        let check = check_packing(&p, &set);
        println!(
            "eps {eps:.1e}: m = {}, N = {}, min sep^2 = {:.3e} (eps^2 = {:.3e}), KL {:.3e} <= {:.3e}",
            set.m,
            set.codebook.len(),
            check.min_separation_sq,
            eps * eps,
            check.max_kl,
            kl_bound(&set)
        );
        println!(
            "    recipe n = {}, omega = {:.4} (limit {OMEGA_MAX}), rate at that n = {:.3e}, {}",
            check.recipe_n,
            check.budget.omega,
            lower_rate(sigma, radius, check.recipe_n as usize, 2.0, r, s)?,
            if check.passes(&set) { "ok" } else { "violated" }
        );
    }
    Ok(())
}
