//! Loads an operator from a coefficient table (eigenvalues plus
//! eigenfunctions on a grid) and fits it like the built-in instance.

use std::io::Write;

use invlearn::estimator::{error_norm, fit, lambda_rule};
use invlearn::problem::{synthesize_source, ProblemModel, SourceRecipe};
use invlearn::sampling::{draw_dataset, NoiseModel};
use invlearn::spectral::{make_regularizer, Method};

fn main() -> invlearn::Result<()> {
    // Table for mu_j = (pi j)^-2 with <F_x, e_j> = sqrt(2) sin(pi j x) / (pi j).
    let dir = std::env::temp_dir().join("invlearn_custom_problem");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("table.csv");
    let mut file = std::fs::File::create(&path)?;
    let (modes, grid) = (60, 401);
    write!(file, "j,mu")?;
    for g in 0..grid {
        write!(file, ",{}", g as f64 / (grid - 1) as f64)?;
    }
    writeln!(file)?;
    for j in 1..=modes {
        let pj = std::f64::consts::PI * j as f64;
        write!(file, "{j},{:e}", 1.0 / (pj * pj))?;
        for g in 0..grid {
            let x = g as f64 / (grid - 1) as f64;
            write!(file, ",{:e}", 2f64.sqrt() * (pj * x).sin() / pj)?;
        }
        writeln!(file)?;
    }
    drop(file);

    let p = ProblemModel::from_table_csv(&path)?;
    println!("loaded `{}` with J = {}, kappa^2 = {:.4}", p.name(), p.truncation(), p.kappa_sq());
    let f = synthesize_source(&p, 0.5, 1.0, &SourceRecipe::Power(1.0))?;
    let data = draw_dataset(&p, &f, 300, 0.1, NoiseModel::BoundedUniform, 9)?;
    let lambda = lambda_rule(0.1, 1.0, 300, 2.0, 0.5)?;
    let est = fit(&p, &data, &make_regularizer(Method::Tikhonov, None)?, lambda)?;
    println!("L2 error {:.4e}", error_norm(&p, &f, &est, 0.0)?);
    Ok(())
}
