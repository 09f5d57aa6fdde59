//! Monte Carlo rate experiments: configuration, the replicate grid, moment
//! aggregation, log-log slope fits and the `rates.csv` / `report.json`
//! outputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{error_norm_with_floor, fit, lambda_rule, rate_exponent};
use crate::problem::{synthesize_source, ProblemModel, SourceRecipe, DEFAULT_TRUNCATION};
use crate::sampling::{cell_rng, cell_stream, draw_dataset_with, NoiseModel};
use crate::spectral::{make_regularizer, Method, Regularizer};

pub const DEFAULT_SLOPE_TOLERANCE: f64 = 0.08;
pub const WORKERS_ENV: &str = "INVLEARN_WORKERS";
/// Points whose moment is below this multiple of the truncation floor are
/// left out of the slope fit.
pub const FLOOR_FACTOR: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub problem: String,
    pub truncation: usize,
    pub b: f64,
    pub r: f64,
    pub s: f64,
    pub radius: f64,
    pub sigma: f64,
    pub noise_model: NoiseModel,
    pub method: Method,
    pub q: Option<f64>,
    pub truth: SourceRecipe,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub p: f64,
    pub seed: u64,
    pub output: PathBuf,
    pub slope_tolerance: f64,
    pub exclude_smallest: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: "differentiation".into(),
            truncation: DEFAULT_TRUNCATION,
            b: 2.0,
            r: 0.5,
            s: 0.5,
            radius: 1.0,
            sigma: 0.1,
            noise_model: NoiseModel::Gaussian,
            method: Method::Tikhonov,
            q: None,
            truth: SourceRecipe::Power(1.0),
            n_grid: vec![250, 500, 1000, 2000, 4000],
            replicates: 50,
            p: 2.0,
            seed: 1,
            output: PathBuf::from("out"),
            slope_tolerance: DEFAULT_SLOPE_TOLERANCE,
            exclude_smallest: false,
        }
    }
}

fn config_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Config { line, msg: msg.into() }
}

impl ExperimentConfig {
    /// Parses flat `key = value` lines; `#` starts a comment. Unknown keys are
    /// rejected and the result is validated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(line_no, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| -> Result<f64> {
                v.parse::<f64>().map_err(|_| config_err(line_no, format!("`{key}` needs a number, got `{v}`")))
            };
            let int = |v: &str| -> Result<u64> {
                v.parse::<u64>().map_err(|_| config_err(line_no, format!("`{key}` needs an integer, got `{v}`")))
            };
            match key {
                "problem" => cfg.problem = value.to_string(),
                "truncation" | "J" => cfg.truncation = int(value)? as usize,
                "b" => cfg.b = num(value)?,
                "r" => cfg.r = num(value)?,
                "s" => cfg.s = num(value)?,
                "R" | "radius" => cfg.radius = num(value)?,
                "sigma" => cfg.sigma = num(value)?,
                "noise_model" | "noise" => cfg.noise_model = value.parse()?,
                "regularizer" | "method" => cfg.method = value.parse()?,
                "q" => cfg.q = Some(num(value)?),
                "truth" => cfg.truth = SourceRecipe::parse(value)?,
                "n_grid" => {
                    cfg.n_grid = value
                        .split(|c: char| c == ',' || c.is_whitespace())
                        .filter(|t| !t.is_empty())
                        .map(|t| int(t).map(|v| v as usize))
                        .collect::<Result<_>>()?
                }
                "replicates" => cfg.replicates = int(value)? as usize,
                "p" => cfg.p = num(value)?,
                "seed" => cfg.seed = int(value)?,
                "output" => cfg.output = PathBuf::from(value),
                "slope_tolerance" => cfg.slope_tolerance = num(value)?,
                "exclude_smallest" => {
                    cfg.exclude_smallest = value
                        .parse::<bool>()
                        .map_err(|_| config_err(line_no, "`exclude_smallest` needs true or false"))?
                }
                other => return Err(config_err(line_no, format!("unknown key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn regularizer(&self) -> Result<Regularizer> {
        make_regularizer(self.method, self.q)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(config_err(0, msg));
        if !(0.0..=0.5).contains(&self.s) {
            return bad(format!("s = {} outside [0, 1/2]", self.s));
        }
        if !(self.r > 0.0) || !(self.b > 1.0) {
            return bad("need r > 0 and b > 1".into());
        }
        if !(self.sigma > 0.0) || !(self.radius > 0.0) {
            return bad("sigma and R must be positive (sigma = 0 gives lambda = 0)".into());
        }
        if !(self.p >= 1.0) {
            return bad("moment order p must be at least 1".into());
        }
        if self.n_grid.is_empty() || self.n_grid[0] == 0 || self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("n_grid must be positive and strictly increasing".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be positive".into());
        }
        self.regularizer()?.check_qualification(self.r, self.s)
    }

    /// Renders the configuration in the format accepted by [`parse`](Self::parse).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        kv("problem", self.problem.clone());
        kv("truncation", self.truncation.to_string());
        kv("b", self.b.to_string());
        kv("r", self.r.to_string());
        kv("s", self.s.to_string());
        kv("R", self.radius.to_string());
        kv("sigma", self.sigma.to_string());
        kv("noise_model", self.noise_model.to_string());
        kv("regularizer", self.method.id().to_string());
        if let Some(q) = self.q {
            kv("q", q.to_string());
        }
        kv("truth", self.truth.to_string());
        kv("n_grid", self.n_grid.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","));
        kv("replicates", self.replicates.to_string());
        kv("p", self.p.to_string());
        kv("seed", self.seed.to_string());
        kv("output", self.output.display().to_string());
        kv("slope_tolerance", self.slope_tolerance.to_string());
        kv("exclude_smallest", self.exclude_smallest.to_string());
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub lambda: f64,
    pub p: f64,
    /// `(mean error^p)^(1/p)` over replicates.
    pub moment: f64,
    pub stderr: f64,
    /// Largest truncation floor over replicates.
    pub floor: f64,
    pub excluded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    pub slope: f64,
    /// Half-width of the 95% confidence interval of the slope.
    pub slope_ci: f64,
    pub theory: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Least-squares slope of `ys` on `xs` with its 95% half-width.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    if xs.len() < 3 {
        return (slope, f64::INFINITY);
    }
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum();
    let se = (rss / (k - 2.0) / sxx).sqrt();
    (slope, t_quantile_975(xs.len() - 2) * se)
}

/// Two-sided 95% Student-t quantile.
fn t_quantile_975(df: usize) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160, 2.145,
        2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048,
        2.045, 2.042,
    ];
    match df {
        0 => f64::INFINITY,
        1..=30 => TABLE[df - 1],
        _ => 1.96,
    }
}

/// Aggregates per-replicate errors at one `n` into a p-th moment, with a
/// delta-method standard error.
pub fn moment_with_stderr(errors: &[f64], p: f64) -> (f64, f64) {
    let k = errors.len() as f64;
    let powers: Vec<f64> = errors.iter().map(|e| e.powf(p)).collect();
    let mean = powers.iter().sum::<f64>() / k;
    let moment = mean.powf(1.0 / p);
    if errors.len() < 2 || mean == 0.0 {
        return (moment, 0.0);
    }
    let var = powers.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (moment, moment / (p * mean) * (var / k).sqrt())
}

fn build_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        builder = builder.num_threads(w.max(1));
    }
    builder.build().map_err(|e| Error::Precondition(format!("thread pool: {e}")))
}

pub fn run_rates(cfg: &ExperimentConfig) -> Result<RateReport> {
    cfg.validate()?;
    let problem = ProblemModel::by_name(&cfg.problem, cfg.truncation)?;
    let truth = synthesize_source(&problem, cfg.r, cfg.radius, &cfg.truth)?;
    let reg = cfg.regularizer()?;
    let theory = -rate_exponent(cfg.b, cfg.r, cfg.s)?;
    let lambdas: Vec<f64> = cfg
        .n_grid
        .iter()
        .map(|&n| lambda_rule(cfg.sigma, cfg.radius, n, cfg.b, cfg.r))
        .collect::<Result<_>>()?;

    let cells: Vec<(usize, usize)> = (0..cfg.n_grid.len())
        .flat_map(|i| (0..cfg.replicates).map(move |rep| (i, rep)))
        .collect();
    let pool = build_pool()?;
    let results: Vec<Result<(f64, f64)>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(i, rep)| {
                let stream = cell_stream(i, rep);
                let mut rng = cell_rng(cfg.seed, stream);
                let n = cfg.n_grid[i];
                let d = draw_dataset_with(&problem, &truth, n, cfg.sigma, cfg.noise_model, &mut rng, stream)?;
                let est = fit(&problem, &d, &reg, lambdas[i])?;
                let e = error_norm_with_floor(&problem, &truth, &est, cfg.s)?;
                Ok((e.value, e.floor))
            })
            .collect()
    });
    let results: Vec<(f64, f64)> = results.into_iter().collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(cfg.n_grid.len());
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let chunk = &results[i * cfg.replicates..(i + 1) * cfg.replicates];
        let errors: Vec<f64> = chunk.iter().map(|c| c.0).collect();
        let floor = chunk.iter().map(|c| c.1).fold(0.0, f64::max);
        let (moment, stderr) = moment_with_stderr(&errors, cfg.p);
        let excluded = moment < FLOOR_FACTOR * floor || (cfg.exclude_smallest && i == 0);
        rows.push(RateRow { n, lambda: lambdas[i], p: cfg.p, moment, stderr, floor, excluded });
    }
    let used: Vec<&RateRow> = rows.iter().filter(|r| !r.excluded).collect();
    let (slope, slope_ci) = if used.len() >= 2 {
        let xs: Vec<f64> = used.iter().map(|r| (r.n as f64).ln()).collect();
        let ys: Vec<f64> = used.iter().map(|r| r.moment.ln()).collect();
        ols_slope(&xs, &ys)
    } else {
        (f64::NAN, f64::INFINITY)
    };
    let pass = (slope - theory).abs() <= cfg.slope_tolerance;
    Ok(RateReport { rows, slope, slope_ci, theory, tolerance: cfg.slope_tolerance, pass })
}

/// `n,lambda,p,moment,stderr,floor` with a header row.
pub fn write_rates_csv<W: Write>(report: &RateReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "lambda", "p", "moment", "stderr", "floor"])?;
    for r in &report.rows {
        w.write_record([
            r.n.to_string(),
            format!("{:e}", r.lambda),
            format!("{}", r.p),
            format!("{:e}", r.moment),
            format!("{:e}", r.stderr),
            format!("{:e}", r.floor),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ReportJson<'a> {
    slope: f64,
    slope_ci: f64,
    theory: f64,
    pass: bool,
    tolerance: f64,
    excluded_n: Vec<usize>,
    rows: &'a [RateRow],
}

pub fn report_json(report: &RateReport) -> Result<String> {
    let json = ReportJson {
        slope: report.slope,
        slope_ci: report.slope_ci,
        theory: report.theory,
        pass: report.pass,
        tolerance: report.tolerance,
        excluded_n: report.rows.iter().filter(|r| r.excluded).map(|r| r.n).collect(),
        rows: &report.rows,
    };
    Ok(serde_json::to_string_pretty(&json)?)
}

/// Writes `rates.csv` and `report.json` into `dir`.
pub fn write_rate_outputs(report: &RateReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_rates_csv(report, fs::File::create(dir.join("rates.csv"))?)?;
    fs::write(dir.join("report.json"), report_json(report)? + "\n")?;
    Ok(())
}

/// Writes rows of string cells with a header.
pub fn write_table<W: Write>(out: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}
