//! Inverse-learning problem instances.
//!
//! A [`ProblemModel`] bundles everything the estimators need to know about the
//! forward operator `A`: the kernel `K(x, t) = <F_x, F_t>`, the eigenvalues
//! `mu_j` of `B = S*S` (nonincreasing), the feature coefficients
//! `<F_x, e_j>` in the eigenbasis of `B`, the bound `kappa^2 = sup_x K(x, x)` and
//! the design distribution of the inputs.
//!
//! Two kinds of instances ship:
//!
//! * [`ProblemModel::differentiation`]: recovering `f` from samples of
//!   `g(x) = int_0^x f(t) dt` on mean-zero `L^2[0, 1]`. Everything is analytic:
//!   `K(x, t) = min(x, t) - x t`, `mu_j = 1 / (pi^2 j^2)`,
//!   `e_j(t) = sqrt(2) cos(pi j t)` and `<F_x, e_j> = sqrt(2) sin(pi j x) / (pi j)`.
//! * [`ProblemModel::from_table`]: user supplied eigenvalues and feature
//!   coefficients tabulated on a grid, linearly interpolated in `x`.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;

use crate::error::{invalid, Error, Result};

/// Default series truncation level.
pub const DEFAULT_TRUNCATION: usize = 1000;

/// Distribution of the design points.
#[derive(Clone)]
pub enum Design {
    Uniform { low: f64, high: f64 },
    /// Arbitrary distribution given by its quantile function on `[0, 1)`.
    InverseCdf(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Design {
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Design::Uniform { low, high } => low + (high - low) * u,
            Design::InverseCdf(q) => q(u),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

impl fmt::Debug for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Design::Uniform { low, high } => write!(f, "Uniform({low}, {high})"),
            Design::InverseCdf(_) => write!(f, "InverseCdf(..)"),
        }
    }
}

/// Eigenvalues beyond the truncation follow `mu_j = scale * j^(-exponent)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerTail {
    pub scale: f64,
    pub exponent: f64,
}

/// How [`ProblemModel::kernel`] is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelForm {
    /// The instance's own closed form (untruncated).
    Closed,
    /// The truncated Mercer sum `sum_{j <= J} <F_x, e_j> <F_t, e_j>`.
    Mercer,
}

/// Feature coefficients tabulated on a sorted grid.
#[derive(Clone, Debug)]
pub struct FeatureTable {
    grid: Vec<f64>,
    /// `rows[j - 1][g] = <F_{grid[g]}, e_j>`
    rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    fn coeff(&self, x: f64, j: usize) -> f64 {
        let (g, w) = self.locate(x);
        let row = &self.rows[j - 1];
        if w == 0.0 {
            row[g]
        } else {
            (1.0 - w) * row[g] + w * row[g + 1]
        }
    }

    fn fill_row(&self, x: f64, out: &mut [f64]) {
        let (g, w) = self.locate(x);
        for (slot, row) in out.iter_mut().zip(&self.rows) {
            *slot = if w == 0.0 {
                row[g]
            } else {
                (1.0 - w) * row[g] + w * row[g + 1]
            };
        }
    }

    /// Cell index and interpolation weight; clamps outside the grid.
    fn locate(&self, x: f64) -> (usize, f64) {
        let last = self.grid.len() - 1;
        if x <= self.grid[0] {
            return (0, 0.0);
        }
        if x >= self.grid[last] {
            return (last, 0.0);
        }
        let hi = self.grid.partition_point(|&g| g <= x);
        let lo = hi - 1;
        let w = (x - self.grid[lo]) / (self.grid[hi] - self.grid[lo]);
        (lo, w)
    }
}

#[derive(Clone, Debug)]
enum Instance {
    Differentiation,
    Tabulated(Arc<FeatureTable>),
}

/// An inverse-learning problem instance. Immutable once built and cheap to
/// clone; share it freely between threads.
#[derive(Clone, Debug)]
pub struct ProblemModel {
    name: String,
    instance: Instance,
    eigenvalues: Vec<f64>,
    kappa_sq: f64,
    design: Design,
    kernel_form: KernelForm,
    eigensystem_matches_design: bool,
}

impl ProblemModel {
    /// The differentiation instance on `[0, 1]` with uniform design, truncated
    /// at `truncation` modes.
    pub fn differentiation(truncation: usize) -> Result<Self> {
        if truncation == 0 {
            return Err(invalid("truncation level must be at least 1"));
        }
        let eigenvalues = (1..=truncation)
            .map(|j| 1.0 / (PI * PI * (j * j) as f64))
            .collect();
        Ok(Self {
            name: "differentiation".into(),
            instance: Instance::Differentiation,
            eigenvalues,
            kappa_sq: 0.25,
            design: Design::Uniform { low: 0.0, high: 1.0 },
            kernel_form: KernelForm::Closed,
            eigensystem_matches_design: true,
        })
    }

    /// Looks up a shipped instance by name.
    pub fn by_name(name: &str, truncation: usize) -> Result<Self> {
        match name {
            "differentiation" => Self::differentiation(truncation),
            other => Err(invalid(format!("unknown problem `{other}`"))),
        }
    }

    /// Builds an instance from tabulated eigenvalues and feature coefficients.
    ///
    /// `rows[j - 1][g]` holds `<F_x, e_j>` at `x = grid[g]`. The design is
    /// uniform over the grid range and `kappa^2` is the grid maximum of
    /// `sum_j <F_x, e_j>^2`, which is the exact supremum for the interpolated
    /// feature map.
    pub fn from_table(
        name: impl Into<String>,
        grid: Vec<f64>,
        eigenvalues: Vec<f64>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if grid.len() < 2 {
            return Err(invalid("feature table needs at least two grid points"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("feature table grid must be strictly increasing"));
        }
        if eigenvalues.is_empty() || eigenvalues.len() != rows.len() {
            return Err(invalid("one feature row per eigenvalue is required"));
        }
        if rows.iter().any(|r| r.len() != grid.len()) {
            return Err(invalid("feature rows must match the grid length"));
        }
        if eigenvalues.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(invalid("eigenvalues must be finite and nonnegative"));
        }
        if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            return Err(invalid("eigenvalues must be nonincreasing"));
        }
        let kappa_sq = (0..grid.len())
            .map(|g| rows.iter().map(|r| r[g] * r[g]).sum::<f64>())
            .fold(0.0_f64, f64::max);
        if !(kappa_sq > 0.0) {
            return Err(invalid("feature table is identically zero"));
        }
        if eigenvalues[0] > kappa_sq * (1.0 + 1e-9) {
            return Err(invalid(format!(
                "mu_1 = {} exceeds kappa^2 = {kappa_sq}",
                eigenvalues[0]
            )));
        }
        let (low, high) = (grid[0], grid[grid.len() - 1]);
        Ok(Self {
            name: name.into(),
            instance: Instance::Tabulated(Arc::new(FeatureTable { grid, rows })),
            eigenvalues,
            kappa_sq,
            design: Design::Uniform { low, high },
            kernel_form: KernelForm::Mercer,
            eigensystem_matches_design: true,
        })
    }

    /// Loads a coefficient table: a CSV whose header reads `j,mu,x_1,...,x_G`
    /// (grid points as column names) and whose row `j` carries `mu_j` followed
    /// by `<F_x, e_j>` at each grid point. Lines starting with `#` are ignored.
    pub fn from_table_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)?;
        let header = reader.headers()?.clone();
        if header.len() < 4 || &header[0] != "j" || &header[1] != "mu" {
            return Err(invalid("table header must start with `j,mu` followed by grid points"));
        }
        let grid = header
            .iter()
            .skip(2)
            .map(|s| s.parse::<f64>().map_err(|_| invalid(format!("bad grid point `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        let mut eigenvalues = Vec::new();
        let mut rows = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let record = record?;
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| invalid(format!("row {}: bad number `{s}`", idx + 1)))
            };
            let j = parse(&record[0])?;
            if j != (idx + 1) as f64 {
                return Err(invalid(format!("row {}: expected j = {}", idx + 1, idx + 1)));
            }
            eigenvalues.push(parse(&record[1])?);
            rows.push(record.iter().skip(2).map(parse).collect::<Result<Vec<_>>>()?);
        }
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "table".into());
        Self::from_table(name, grid, eigenvalues, rows)
    }

    /// Same instance, different design distribution. The shipped eigensystem
    /// belongs to the original design, so the result is flagged as having an
    /// unknown eigensystem (fine for data generation, not for rate checks).
    pub fn with_design(mut self, design: Design) -> Self {
        self.design = design;
        self.eigensystem_matches_design = false;
        self
    }

    /// Same instance with the kernel replaced by its truncated Mercer sum.
    pub fn with_mercer_kernel(mut self) -> Self {
        self.kernel_form = KernelForm::Mercer;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn truncation(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `mu_j`, 1-based.
    pub fn eigenvalue(&self, j: usize) -> f64 {
        self.eigenvalues[j - 1]
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn kappa_sq(&self) -> f64 {
        self.kappa_sq
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn kernel_form(&self) -> KernelForm {
        self.kernel_form
    }

    pub fn domain(&self) -> (f64, f64) {
        match &self.instance {
            Instance::Differentiation => (0.0, 1.0),
            Instance::Tabulated(t) => (t.grid[0], t.grid[t.grid.len() - 1]),
        }
    }

    pub fn has_known_eigensystem(&self) -> bool {
        self.eigensystem_matches_design
    }

    /// Whether the kernel is `min(x, t) - x t` in closed form, which enables
    /// the O(n) structured solvers in [`crate::linalg::BridgeGram`].
    pub fn has_bridge_structure(&self) -> bool {
        matches!(self.instance, Instance::Differentiation) && self.kernel_form == KernelForm::Closed
    }

    pub fn kernel(&self, x: f64, t: f64) -> f64 {
        match (&self.instance, self.kernel_form) {
            (Instance::Differentiation, KernelForm::Closed) => x.min(t) - x * t,
            _ => {
                let j_max = self.truncation();
                let mut a = vec![0.0; j_max];
                let mut b = vec![0.0; j_max];
                self.feature_row(x, &mut a);
                self.feature_row(t, &mut b);
                a.iter().zip(&b).map(|(u, v)| u * v).sum()
            }
        }
    }

    /// `<F_x, e_j>`, 1-based `j`.
    pub fn feature_coeff(&self, x: f64, j: usize) -> f64 {
        match &self.instance {
            Instance::Differentiation => {
                let jf = j as f64;
                SQRT_2 * (PI * jf * x).sin() / (PI * jf)
            }
            Instance::Tabulated(t) => t.coeff(x, j),
        }
    }

    /// Fills `out[j - 1] = <F_x, e_j>` for `j = 1..=out.len()`.
    pub fn feature_row(&self, x: f64, out: &mut [f64]) {
        match &self.instance {
            Instance::Differentiation => sine_feature_row(x, out),
            Instance::Tabulated(t) => t.fill_row(x, out),
        }
    }

    /// Pointwise eigenvector `e_j(t)` of `B`, where the instance knows it.
    pub fn eigenvector(&self, j: usize, t: f64) -> Option<f64> {
        match &self.instance {
            Instance::Differentiation => Some(SQRT_2 * (PI * j as f64 * t).cos()),
            Instance::Tabulated(_) => None,
        }
    }

    /// Uniform bound on `|K(x, t) - sum_{j <= J} <F_x, e_j> <F_t, e_j>|`.
    pub fn kernel_tail_bound(&self) -> Option<f64> {
        match (&self.instance, self.kernel_form) {
            // sum_{j > J} 2 / (pi^2 j^2) <= 2 / (pi^2 J)
            (Instance::Differentiation, KernelForm::Closed) => {
                Some(2.0 / (PI * PI * self.truncation() as f64))
            }
            _ => Some(0.0),
        }
    }

    /// Analytic law of the eigenvalues past the truncation, where known.
    pub fn eigenvalue_tail(&self) -> Option<PowerTail> {
        match &self.instance {
            Instance::Differentiation => Some(PowerTail {
                scale: 1.0 / (PI * PI),
                exponent: 2.0,
            }),
            Instance::Tabulated(_) => None,
        }
    }
}

/// `sqrt(2) sin(pi j x) / (pi j)` for `j = 1..=out.len()`, by angle addition
/// with an exact restart every 64 terms.
fn sine_feature_row(x: f64, out: &mut [f64]) {
    let theta = PI * x;
    let (s1, c1) = theta.sin_cos();
    let (mut s, mut c) = (0.0_f64, 1.0_f64);
    for (idx, slot) in out.iter_mut().enumerate() {
        let j = idx + 1;
        if idx % 64 == 0 {
            (s, c) = (j as f64 * theta).sin_cos();
        } else {
            let next = s * c1 + c * s1;
            c = c * c1 - s * s1;
            s = next;
        }
        *slot = SQRT_2 * s / (PI * j as f64);
    }
}

/// Element `f = B^r h` of the source set, stored by its eigen-coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceFunction {
    /// `f_j = <f, e_j>` for `j = 1..=J`.
    pub coeffs: Vec<f64>,
    pub r: f64,
    pub radius: f64,
    /// `||h||` with `f = B^r h`.
    pub h_norm: f64,
    pub label: String,
}

impl SourceFunction {
    /// Recomputes `||h|| = sqrt(sum_j (f_j / mu_j^r)^2)` from the coefficients.
    pub fn source_norm(&self, p: &ProblemModel) -> f64 {
        self.coeffs
            .iter()
            .zip(p.eigenvalues())
            .filter(|(_, &mu)| mu > 0.0)
            .map(|(f, mu)| (f / mu.powf(self.r)).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn zero(truncation: usize) -> Self {
        Self {
            coeffs: vec![0.0; truncation],
            r: 0.0,
            radius: 1.0,
            h_norm: 0.0,
            label: "zero".into(),
        }
    }
}

/// How to choose `h` in `f = B^r h`.
#[derive(Clone, Debug, PartialEq)]
pub enum SourceRecipe {
    /// `h = R e_j`.
    SingleMode(usize),
    /// `h_j` proportional to `ratio^(j-1)`, scaled to `||h|| = R`.
    Geometric(f64),
    /// `h_j` proportional to `j^(-a)`, scaled to `||h|| = R`.
    Power(f64),
    /// Explicit `h_j` for `j = 1..`.
    Coefficients(Vec<f64>),
}

impl SourceRecipe {
    /// Parses `mode:<j>`, `geometric:<ratio>` or `power:<a>`.
    pub fn parse(s: &str) -> Result<Self> {
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| invalid(format!("source recipe `{s}` must look like kind:value")))?;
        match kind.trim() {
            "mode" => arg
                .trim()
                .parse::<usize>()
                .map(SourceRecipe::SingleMode)
                .map_err(|_| invalid(format!("bad mode index `{arg}`"))),
            "geometric" => arg
                .trim()
                .parse::<f64>()
                .map(SourceRecipe::Geometric)
                .map_err(|_| invalid(format!("bad geometric ratio `{arg}`"))),
            "power" => arg
                .trim()
                .parse::<f64>()
                .map(SourceRecipe::Power)
                .map_err(|_| invalid(format!("bad power exponent `{arg}`"))),
            other => Err(invalid(format!("unknown source recipe `{other}`"))),
        }
    }
}

impl fmt::Display for SourceRecipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceRecipe::SingleMode(j) => write!(f, "mode:{j}"),
            SourceRecipe::Geometric(q) => write!(f, "geometric:{q}"),
            SourceRecipe::Power(a) => write!(f, "power:{a}"),
            SourceRecipe::Coefficients(c) => write!(f, "coefficients[{}]", c.len()),
        }
    }
}

/// Builds `f = B^r h` with `||h|| <= R`. Modes with `mu_j = 0` are excluded.
pub fn synthesize_source(
    p: &ProblemModel,
    r: f64,
    radius: f64,
    recipe: &SourceRecipe,
) -> Result<SourceFunction> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(invalid("smoothness r must be finite and nonnegative"));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(invalid("radius R must be positive"));
    }
    let mu = p.eigenvalues();
    let active = mu.iter().take_while(|&&m| m > 0.0).count();
    let mut h = vec![0.0; mu.len()];
    match recipe {
        SourceRecipe::SingleMode(j) => {
            if *j == 0 || *j > active {
                return Err(invalid(format!("mode {j} outside 1..={active}")));
            }
            h[j - 1] = radius;
        }
        SourceRecipe::Geometric(ratio) => {
            if !(*ratio > 0.0 && *ratio < 1.0) {
                return Err(invalid("geometric ratio must lie in (0, 1)"));
            }
            let mut w = 1.0;
            for slot in h.iter_mut().take(active) {
                *slot = w;
                w *= ratio;
            }
            let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
            h.iter_mut().for_each(|v| *v *= radius / norm);
        }
        SourceRecipe::Power(a) => {
            if !(*a > 0.0) || !a.is_finite() {
                return Err(invalid("power exponent must be positive"));
            }
            for (j, slot) in h.iter_mut().take(active).enumerate() {
                *slot = ((j + 1) as f64).powf(-a);
            }
            let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
            h.iter_mut().for_each(|v| *v *= radius / norm);
        }
        SourceRecipe::Coefficients(c) => {
            if c.len() > mu.len() {
                return Err(invalid("more source coefficients than the truncation level"));
            }
            if c.iter().skip(active).any(|&v| v != 0.0) {
                return Err(invalid("source coefficients on zero eigenvalues are not identifiable"));
            }
            h[..c.len()].copy_from_slice(c);
        }
    }
    let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > radius * (1.0 + 1e-12) {
        return Err(Error::RadiusViolation { norm, radius });
    }
    let coeffs: Vec<f64> = h
        .iter()
        .zip(mu)
        .map(|(hj, &m)| if m > 0.0 { m.powf(r) * hj } else { 0.0 })
        .collect();
    let mut f = SourceFunction {
        coeffs,
        r,
        radius,
        h_norm: 0.0,
        label: format!("{recipe};r={r};R={radius}"),
    };
    f.h_norm = f.source_norm(p);
    Ok(f)
}

/// `(Af)(x) = sum_{j <= J} f_j <F_x, e_j>`.
pub fn forward_value(p: &ProblemModel, f: &SourceFunction, x: f64) -> f64 {
    let mut row = vec![0.0; f.coeffs.len().min(p.truncation())];
    p.feature_row(x, &mut row);
    row.iter().zip(&f.coeffs).map(|(c, fj)| c * fj).sum()
}

/// Forward values at many points, reusing one feature buffer.
pub fn forward_values(p: &ProblemModel, f: &SourceFunction, xs: &[f64]) -> Vec<f64> {
    let mut row = vec![0.0; f.coeffs.len().min(p.truncation())];
    xs.iter()
        .map(|&x| {
            p.feature_row(x, &mut row);
            row.iter().zip(&f.coeffs).map(|(c, fj)| c * fj).sum()
        })
        .collect()
}

/// Midpoint nodes of the design quantile function, equal weights.
pub(crate) fn design_nodes(p: &ProblemModel, quad_points: usize) -> Vec<f64> {
    (0..quad_points)
        .map(|q| p.design().quantile((q as f64 + 0.5) / quad_points as f64))
        .collect()
}

/// Residual `||B e_j - mu_j e_j||` computed in coefficient space:
/// `<B e_j, e_k> = int <F_x, e_j> <F_x, e_k> dnu(x)`, integrated with a
/// `quad_points`-node midpoint rule in the design quantile.
pub fn eigensystem_consistency_check(p: &ProblemModel, j: usize, quad_points: usize) -> Result<f64> {
    if quad_points < 2 {
        return Err(Error::Quadrature(format!(
            "need at least 2 quadrature points, got {quad_points}"
        )));
    }
    if j == 0 || j > p.truncation() {
        return Err(invalid(format!("eigen index {j} outside 1..={}", p.truncation())));
    }
    let big_j = p.truncation();
    let w = 1.0 / quad_points as f64;
    let mut gram_row = vec![0.0; big_j];
    let mut row = vec![0.0; big_j];
    for x in design_nodes(p, quad_points) {
        p.feature_row(x, &mut row);
        let cj = row[j - 1];
        for (acc, ck) in gram_row.iter_mut().zip(&row) {
            *acc += w * cj * ck;
        }
    }
    gram_row[j - 1] -= p.eigenvalue(j);
    Ok(gram_row.iter().map(|v| v * v).sum::<f64>().sqrt())
}
