//! Command-line front end. Exit codes: 0 when every check passes, 2 when a
//! check fails, 1 on errors and 64 on usage errors.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::concentration::{
    check_neumann_inverse, check_noise_term, check_operator_hs_deviation, check_power_perturbation,
    check_weighted_operator_deviation, Bound, CoverageReport,
};
use crate::effdim::{classify_priors, effective_dimension, integral_upper_bound, lemma_upper_bound, lower_floor};
use crate::error::{Error, Result};
use crate::harness::{report_json, run_rates, write_rate_outputs, write_table, ExperimentConfig};
use crate::minimax::{build_packing, check_packing};
use crate::problem::{synthesize_source, ProblemModel, SourceRecipe};
use crate::sampling::{draw_dataset, NoiseModel};
use crate::spectral::{definition_suprema, make_regularizer, qualification_sup, Method, DEFAULT_GRID};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Parser, Debug)]
#[command(name = "invlearn", version, about = "Spectral regularization for inverse learning: rate experiments and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ProblemArgs {
    /// Problem name (`differentiation`) or a coefficient-table CSV path
    #[arg(long, default_value = "differentiation")]
    problem: String,
    /// Number of eigenmodes kept
    #[arg(long, default_value_t = 1000)]
    truncation: usize,
}

impl ProblemArgs {
    fn load(&self) -> Result<ProblemModel> {
        if Path::new(&self.problem).is_file() {
            ProblemModel::from_table_csv(&self.problem)
        } else {
            ProblemModel::by_name(&self.problem, self.truncation)
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo rate experiment from a config file; writes rates.csv and report.json
    Rates {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config output directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Effective dimension table: lambda, N, upper_bound, lower_floor
    Effdim {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5])]
        lambdas: Vec<f64>,
        /// Decay exponent of the eigenvalue class
        #[arg(long, default_value_t = 2.0)]
        b: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Builds and verifies a packing set for the lower bound
    Packing {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 2.0)]
        b: f64,
        #[arg(long, default_value_t = 0.5)]
        r: f64,
        #[arg(long, default_value_t = 0.0)]
        s: f64,
        #[arg(long = "R", default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo coverage of the concentration bounds, or the power perturbation check
    ConcCheck {
        /// all, hs-deviation, noise, weighted-deviation, neumann or power
        #[arg(long, default_value = "all")]
        bound: String,
        #[arg(long, default_value = "differentiation")]
        problem: String,
        #[arg(long, default_value_t = 200)]
        truncation: usize,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 0.05)]
        lambda: f64,
        #[arg(long, default_value_t = 0.1)]
        eta: f64,
        #[arg(long, default_value_t = 500)]
        reps: usize,
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        /// Power for the perturbation check
        #[arg(long, default_value_t = 1.5)]
        r: f64,
        /// Matrix size for the perturbation check
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Checks the qualification inequality sup t^q |r_lambda(t)| <= gamma_q lambda^q
    QualCheck {
        #[arg(long)]
        method: String,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_GRID)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draws a dataset and writes it as CSV
    Simulate {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        #[arg(long, default_value_t = 0.5)]
        r: f64,
        #[arg(long = "R", default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value = "power:1")]
        truth: String,
        #[arg(long, default_value = "gaussian")]
        noise: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_CHECK_FAILED,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            Box::new(fs::File::create(path)?)
        }
        None => Box::new(io::stdout()),
    })
}

fn sci(v: f64) -> String {
    format!("{v:e}")
}

fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Rates { config, seed, out } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(out) = out {
                cfg.output = out;
            }
            let report = run_rates(&cfg)?;
            write_rate_outputs(&report, &cfg.output)?;
            println!("{}", report_json(&report)?);
            Ok(report.pass)
        }
        Command::Effdim { problem, lambdas, b, out } => {
            let p = problem.load()?;
            let classes = classify_priors(&p, b)?;
            let beta = classes
                .beta_fit
                .ok_or_else(|| Error::Precondition(format!("upper decay class with b = {b} not established")))?;
            let mut rows = Vec::new();
            let mut ok = true;
            for &lambda in &lambdas {
                let n = effective_dimension(&p, lambda)?;
                let upper = lemma_upper_bound(beta, b, p.kappa_sq(), lambda);
                let floor = lower_floor(&p, lambda);
                ok &= n.value() <= upper && floor.is_none_or(|f| n.value() >= f);
                rows.push(vec![
                    sci(lambda),
                    sci(n.value()),
                    sci(upper),
                    floor.map(sci).unwrap_or_default(),
                    sci(n.tail_bound),
                    sci(integral_upper_bound(beta, b, p.kappa_sq(), lambda)),
                ]);
            }
            write_table(
                sink(&out)?,
                &["lambda", "N", "upper_bound", "lower_floor", "tail_bound", "integral_bound"],
                &rows,
            )?;
            Ok(ok)
        }
        Command::Packing { problem, eps, b, r, s, radius, sigma, seed, out } => {
            use rand::SeedableRng;
            let p = problem.load()?;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let set = build_packing(&p, b, r, s, radius, eps, sigma, &mut rng)?;
            let check = check_packing(&p, &set);
            let codebook_ok = set.codebook.check_invariants().is_ok();
            write_table(
                sink(&out)?,
                &["eps", "m", "N", "min_separation_sq", "max_kl", "omega_at_recipe_n", "recipe_n"],
                &[vec![
                    sci(set.eps),
                    set.m.to_string(),
                    set.codebook.len().to_string(),
                    sci(check.min_separation_sq),
                    sci(check.max_kl),
                    sci(check.budget.omega),
                    check.recipe_n.to_string(),
                ]],
            )?;
            Ok(check.passes(&set) && codebook_ok)
        }
        Command::ConcCheck { bound, problem, truncation, n, lambda, eta, reps, sigma, r, dim, seed, out } => {
            if bound == "power" {
                let rep = check_power_perturbation(r, dim, reps, seed)?;
                write_table(
                    sink(&out)?,
                    &["r", "dim", "pairs", "max_ratio", "constant", "pass"],
                    &[vec![
                        rep.r.to_string(),
                        rep.dim.to_string(),
                        rep.pairs.to_string(),
                        sci(rep.max_ratio),
                        sci(rep.constant),
                        rep.passes().to_string(),
                    ]],
                )?;
                return Ok(rep.passes());
            }
            let p = ProblemModel::by_name(&problem, truncation)?;
            let bounds = if bound == "all" {
                vec![Bound::HsDeviation, Bound::Noise, Bound::WeightedDeviation, Bound::Neumann]
            } else {
                vec![Bound::parse(&bound)?]
            };
            let mut rows = Vec::new();
            let mut ok = true;
            for b in bounds {
                let result: Result<CoverageReport> = match b {
                    Bound::HsDeviation => check_operator_hs_deviation(&p, n, eta, reps, seed),
                    Bound::Noise => {
                        let f = synthesize_source(&p, 0.5, 1.0, &SourceRecipe::Power(1.0))?;
                        check_noise_term(&p, &f, n, lambda, sigma, NoiseModel::Gaussian, eta, reps, seed)
                    }
                    Bound::WeightedDeviation => check_weighted_operator_deviation(&p, n, lambda, eta, reps, seed),
                    Bound::Neumann => check_neumann_inverse(&p, n, lambda, eta, reps, seed),
                };
                match result {
                    Ok(rep) => {
                        ok &= rep.passes();
                        rows.push(vec![
                            b.id().into(),
                            n.to_string(),
                            rep.lambda.map(sci).unwrap_or_default(),
                            eta.to_string(),
                            rep.replicates.to_string(),
                            rep.violations.to_string(),
                            rep.empirical_coverage.to_string(),
                            rep.required_coverage().to_string(),
                            sci(rep.threshold),
                            sci(rep.max_statistic),
                            if rep.passes() { "pass" } else { "fail" }.into(),
                        ]);
                    }
                    Err(Error::Precondition(msg)) => {
                        eprintln!("{b}: {msg}");
                        ok = false;
                        rows.push(vec![
                            b.id().into(),
                            n.to_string(),
                            sci(lambda),
                            eta.to_string(),
                            "0".into(),
                            String::new(),
                            String::new(),
                            String::new(),
                            String::new(),
                            String::new(),
                            "refused".into(),
                        ]);
                    }
                    Err(e) => return Err(e),
                }
            }
            write_table(
                sink(&out)?,
                &[
                    "bound", "n", "lambda", "eta", "replicates", "violations", "coverage", "required", "threshold",
                    "max_statistic", "status",
                ],
                &rows,
            )?;
            Ok(ok)
        }
        Command::QualCheck { method, q, grid, out } => {
            let method: Method = method.parse()?;
            let reg = make_regularizer(method, q)?;
            let q = reg.declared_q;
            let gamma_q = reg.gamma_q(q)?;
            let mut rows = Vec::new();
            let mut ok = true;
            for lambda in [1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001] {
                let sup = qualification_sup(&reg, q, lambda, grid);
                let bound = gamma_q * reg.effective_lambda(lambda).powf(q);
                let (d, e, g0) = definition_suprema(&reg, lambda, grid);
                let within = |v: f64, c: f64| v <= c * (1.0 + 1e-12);
                let pass = within(sup, bound) && within(d, reg.d) && within(e, reg.e) && within(g0, reg.gamma0);
                ok &= pass;
                rows.push(vec![
                    method.id().into(),
                    q.to_string(),
                    sci(lambda),
                    sci(sup),
                    sci(bound),
                    sci(d),
                    sci(e),
                    sci(g0),
                    pass.to_string(),
                ]);
            }
            write_table(
                sink(&out)?,
                &["method", "q", "lambda", "sup", "bound", "sup_tg", "sup_lambda_g", "sup_r", "pass"],
                &rows,
            )?;
            Ok(ok)
        }
        Command::Simulate { problem, n, sigma, r, radius, truth, noise, seed, out } => {
            let p = problem.load()?;
            let f = synthesize_source(&p, r, radius, &SourceRecipe::parse(&truth)?)?;
            let d = draw_dataset(&p, &f, n, sigma, noise.parse()?, seed)?;
            d.write_csv(sink(&out)?)?;
            Ok(true)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_64() {
        assert_eq!(run(["invlearn", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["invlearn"]), EXIT_USAGE);
        assert_eq!(run(["invlearn", "--help"]), EXIT_OK);
    }

    #[test]
    fn qual_check_tikhonov_passes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("qual.csv");
        let code = run(["invlearn", "qual-check", "--method", "tikhonov", "--q", "1", "--out", out.to_str().unwrap()]);
        assert_eq!(code, EXIT_OK);
        let text = fs::read_to_string(out).unwrap();
        assert!(text.starts_with("method,q,lambda,sup,bound"));
    }

    #[test]
    fn tikhonov_beyond_qualification_is_an_error() {
        assert_eq!(run(["invlearn", "qual-check", "--method", "tikhonov", "--q", "2"]), EXIT_ERROR);
    }
}
