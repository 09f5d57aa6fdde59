//! Worst observed ratio ||B1^r - B2^r|| / ||B1 - B2|| over random PSD pairs
//! with spectrum in [0, 1], against the series constant C_r.

use invlearn::concentration::check_power_perturbation;

fn main() -> invlearn::Result<()> {
    for r in [0.5, 1.0, 1.5, 2.0, 3.0] {
        let rep = check_power_perturbation(r, 8, 2000, 11)?;
        println!("r = {r}: max ratio {:.4}, C_r = {:.4}", rep.max_ratio, rep.constant);
    }
    Ok(())
}
