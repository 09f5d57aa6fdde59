//! Monte Carlo rate experiment: estimated slope of log E||f_hat - f||^2
//! against log n, compared with the theoretical exponent.
//!
//! ```bash
//! cargo run --release --example rate_experiment -- configs/tikhonov_s_half.cfg
//! ```

use invlearn::harness::{run_rates, ExperimentConfig};

fn main() -> invlearn::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig {
            n_grid: vec![250, 500, 1000, 2000, 4000],
            replicates: 20,
            ..ExperimentConfig::default()
        },
    };
    let report = run_rates(&cfg)?;
    println!("{:>7} {:>12} {:>12} {:>10}", "n", "lambda", "moment", "stderr");
    for row in &report.rows {
        println!("{:>7} {:>12.4e} {:>12.4e} {:>10.2e}", row.n, row.lambda, row.moment, row.stderr);
    }
    println!(
        "slope {:.4} +/- {:.4}, theory {:.4}, {}",
        report.slope,
        report.slope_ci,
        report.theory,
        if report.pass { "pass" } else { "fail" }
    );
    Ok(())
}
