//! Linear-algebra kernels: structured solvers for the bridge kernel
//! `min(x, t) - x t`, a Lanczos partial eigensolver, tridiagonal helpers and
//! random orthogonal matrices.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

/// A symmetric linear operator on `R^n` given by its action.
pub trait SymOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
}

/// Dense symmetric matrix as an operator.
pub struct DenseSym<'a>(pub &'a DMatrix<f64>);

impl SymOperator for DenseSym<'_> {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let m = self.0;
        let n = m.nrows();
        out.iter_mut().for_each(|o| *o = 0.0);
        // column-major: accumulate columns
        for (k, &xk) in x.iter().enumerate() {
            if xk != 0.0 {
                let col = m.column(k);
                for i in 0..n {
                    out[i] += col[i] * xk;
                }
            }
        }
    }
}

/// The Gram operator `scale * K` of the bridge kernel
/// `K(x, t) = min(x, t) (1 - max(x, t))` on points of `[0, 1]`.
///
/// `K` is the Green's function of `-d^2/dx^2` with zero boundary values, so
/// products, shifted solves and resolvent traces all reduce to O(n) sweeps
/// over the sorted points.
#[derive(Clone, Debug)]
pub struct BridgeGram {
    xs: Vec<f64>,
    order: Vec<usize>,
    scale: f64,
}

/// Distinct interior nodes with the sample indices sitting on each.
struct Nodes {
    positions: Vec<f64>,
    members: Vec<Vec<usize>>,
    boundary: Vec<usize>,
}

impl BridgeGram {
    pub fn new(xs: &[f64], scale: f64) -> Result<Self> {
        if xs.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(invalid("bridge kernel points must lie in [0, 1]"));
        }
        if !(scale > 0.0) {
            return Err(invalid("operator scale must be positive"));
        }
        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
        Ok(Self { xs: xs.to_vec(), order, scale })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    fn nodes(&self) -> Nodes {
        let mut nodes = Nodes { positions: Vec::new(), members: Vec::new(), boundary: Vec::new() };
        for &i in &self.order {
            let x = self.xs[i];
            if x <= 0.0 || x >= 1.0 {
                nodes.boundary.push(i);
            } else if nodes.positions.last() == Some(&x) {
                nodes.members.last_mut().unwrap().push(i);
            } else {
                nodes.positions.push(x);
                nodes.members.push(vec![i]);
            }
        }
        nodes
    }

    /// Tridiagonal `c L + diag(multiplicity)` over the interior nodes, where
    /// `L` is the nonuniform second-difference matrix with zero boundary values.
    fn node_system(nodes: &Nodes, c: f64) -> (Vec<f64>, Vec<f64>) {
        let m = nodes.positions.len();
        let mut diag = vec![0.0; m];
        let mut off = vec![0.0; m.saturating_sub(1)];
        for k in 0..m {
            let left = nodes.positions[k] - if k == 0 { 0.0 } else { nodes.positions[k - 1] };
            let right = if k + 1 == m { 1.0 } else { nodes.positions[k + 1] } - nodes.positions[k];
            diag[k] = c * (1.0 / left + 1.0 / right) + nodes.members[k].len() as f64;
            if k + 1 < m {
                off[k] = -c / right;
            }
        }
        (diag, off)
    }

    /// `(scale K + shift I)^{-1} rhs` for `shift > 0`.
    pub fn solve_shifted(&self, shift: f64, rhs: &[f64]) -> Vec<f64> {
        // (K + c I) z = b with c = shift / scale, b = rhs / scale
        let c = shift / self.scale;
        let nodes = self.nodes();
        let (diag, off) = Self::node_system(&nodes, c);
        let sums: Vec<f64> = nodes
            .members
            .iter()
            .map(|g| g.iter().map(|&i| rhs[i] / self.scale).sum())
            .collect();
        let values = solve_sym_tridiagonal(&diag, &off, &sums);
        let mut z = vec![0.0; rhs.len()];
        for (group, g) in nodes.members.iter().zip(&values) {
            for &i in group {
                z[i] = (rhs[i] / self.scale - g) / c;
            }
        }
        for &i in &nodes.boundary {
            z[i] = rhs[i] / self.scale / c;
        }
        z
    }

    /// `tr((T + lambda)^{-1} T)` for `T = scale K`.
    pub fn resolvent_trace(&self, lambda: f64) -> f64 {
        let nodes = self.nodes();
        let (diag, off) = Self::node_system(&nodes, lambda / self.scale);
        let inv_diag = sym_tridiagonal_inverse_diagonal(&diag, &off);
        nodes
            .members
            .iter()
            .zip(inv_diag)
            .map(|(g, d)| g.len() as f64 * d)
            .sum()
    }
}

impl SymOperator for BridgeGram {
    fn dim(&self) -> usize {
        self.xs.len()
    }

    fn apply(&self, z: &[f64], out: &mut [f64]) {
        // (Kz)_i = (1 - x_i) sum_{x_k <= x_i} x_k z_k + x_i sum_{x_k > x_i} (1 - x_k) z_k
        let mut suffix: f64 = self.order.iter().map(|&k| (1.0 - self.xs[k]) * z[k]).sum();
        let mut prefix = 0.0;
        for &i in &self.order {
            let x = self.xs[i];
            prefix += x * z[i];
            suffix -= (1.0 - x) * z[i];
            out[i] = self.scale * ((1.0 - x) * prefix + x * suffix);
        }
    }
}

/// Thomas algorithm for a symmetric diagonally dominant tridiagonal system.
pub fn solve_sym_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Vec<f64> {
    let m = diag.len();
    if m == 0 {
        return Vec::new();
    }
    let mut c_prime = vec![0.0; m];
    let mut d_prime = vec![0.0; m];
    let mut denom = diag[0];
    d_prime[0] = rhs[0] / denom;
    for k in 1..m {
        c_prime[k - 1] = off[k - 1] / denom;
        denom = diag[k] - off[k - 1] * c_prime[k - 1];
        d_prime[k] = (rhs[k] - off[k - 1] * d_prime[k - 1]) / denom;
    }
    let mut x = d_prime;
    for k in (0..m - 1).rev() {
        x[k] -= c_prime[k] * x[k + 1];
    }
    x
}

/// Diagonal of the inverse of a symmetric tridiagonal matrix from forward
/// and backward pivots: `(A^{-1})_kk = 1 / (f_k + b_k - a_k)`.
pub fn sym_tridiagonal_inverse_diagonal(diag: &[f64], off: &[f64]) -> Vec<f64> {
    let m = diag.len();
    let mut fwd = vec![0.0; m];
    let mut bwd = vec![0.0; m];
    for k in 0..m {
        fwd[k] = diag[k] - if k > 0 { off[k - 1] * off[k - 1] / fwd[k - 1] } else { 0.0 };
    }
    for k in (0..m).rev() {
        bwd[k] = diag[k] - if k + 1 < m { off[k] * off[k] / bwd[k + 1] } else { 0.0 };
    }
    (0..m).map(|k| 1.0 / (fwd[k] + bwd[k] - diag[k])).collect()
}

/// Eigenpairs of a symmetric operator, largest first.
#[derive(Clone, Debug, Default)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

fn dense_from_operator(op: &dyn SymOperator) -> DMatrix<f64> {
    let n = op.dim();
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for k in 0..n {
        e[k] = 1.0;
        op.apply(&e, &mut col);
        e[k] = 0.0;
        for i in 0..n {
            m[(i, k)] = col[i];
        }
    }
    (&m + m.transpose()) * 0.5
}

fn sorted_pairs(values: &DVector<f64>, vectors: &DMatrix<f64>, keep: impl Fn(f64) -> bool) -> EigenPairs {
    let mut idx: Vec<usize> = (0..values.len()).filter(|&i| keep(values[i])).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    EigenPairs {
        values: idx.iter().map(|&i| values[i]).collect(),
        vectors: idx.iter().map(|&i| vectors.column(i).iter().copied().collect()).collect(),
    }
}

const DENSE_CUTOVER: usize = 200;

/// All eigenpairs of `op` with eigenvalue `>= threshold`.
///
/// Small operators are diagonalized densely. Larger ones use Lanczos with full
/// reorthogonalization, stopping once every Ritz value above the threshold and
/// the first one below it have residual `<= tol * theta_max`.
pub fn top_eigenpairs(op: &dyn SymOperator, threshold: f64, tol: f64, seed: u64) -> Result<EigenPairs> {
    let n = op.dim();
    if n == 0 {
        return Ok(EigenPairs::default());
    }
    if n <= DENSE_CUTOVER {
        let eig = dense_from_operator(op).symmetric_eigen();
        return Ok(sorted_pairs(&eig.eigenvalues, &eig.eigenvectors, |v| v >= threshold));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    normalize(&mut v);
    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let max_steps = n.min(800);

    for step in 0..max_steps {
        op.apply(&basis[step], &mut w);
        let a = dot(&w, &basis[step]);
        alpha.push(a);
        // two passes of classical Gram-Schmidt against the whole basis
        for _ in 0..2 {
            for q in &basis {
                let proj = dot(&w, q);
                axpy(-proj, q, &mut w);
            }
        }
        let b = dot(&w, &w).sqrt();
        let k = step + 1;
        let exhausted = b <= 1e-14 * alpha.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(1e-300);
        let check = exhausted || k == max_steps || (k >= 16 && k % 8 == 0);
        if check {
            let tri = tridiagonal(&alpha, &beta);
            let eig = tri.symmetric_eigen();
            let mut idx: Vec<usize> = (0..k).collect();
            idx.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
            let theta_max = eig.eigenvalues[idx[0]].abs().max(f64::MIN_POSITIVE);
            let residual = |i: usize| (b * eig.eigenvectors[(k - 1, i)]).abs();
            let above = idx.iter().take_while(|&&i| eig.eigenvalues[i] >= threshold).count();
            let needed = (above + 1).min(k);
            let converged = idx[..needed].iter().all(|&i| residual(i) <= tol * theta_max);
            if converged || exhausted || k == max_steps {
                if !converged && !exhausted && k == n.min(800) && k < n {
                    return Err(Error::Consistency(format!(
                        "Lanczos did not converge in {k} steps"
                    )));
                }
                let mut pairs = EigenPairs::default();
                for &i in &idx[..above] {
                    let mut u = vec![0.0; n];
                    for (j, q) in basis.iter().enumerate() {
                        axpy(eig.eigenvectors[(j, i)], q, &mut u);
                    }
                    normalize(&mut u);
                    pairs.values.push(eig.eigenvalues[i]);
                    pairs.vectors.push(u);
                }
                return Ok(pairs);
            }
        }
        beta.push(b);
        let mut next = w.clone();
        next.iter_mut().for_each(|x| *x /= b);
        basis.push(next);
    }
    unreachable!("Lanczos loop always returns at its last step")
}

fn tridiagonal(alpha: &[f64], beta: &[f64]) -> DMatrix<f64> {
    let k = alpha.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    t
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

fn normalize(v: &mut [f64]) {
    let norm = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `R`'s diagonal folded into `Q`.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Spectral norm of a symmetric matrix.
pub fn sym_spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bridge_dense(xs: &[f64], scale: f64) -> DMatrix<f64> {
        DMatrix::from_fn(xs.len(), xs.len(), |i, j| scale * (xs[i].min(xs[j]) - xs[i] * xs[j]))
    }

    fn sample_points(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random::<f64>()).collect()
    }

    #[test]
    fn bridge_matvec_matches_dense() {
        let mut xs = sample_points(57, 1);
        xs[3] = xs[10]; // a tie
        xs[4] = 0.0;
        xs[5] = 1.0;
        let op = BridgeGram::new(&xs, 0.7).unwrap();
        let dense = bridge_dense(&xs, 0.7);
        let z = sample_points(57, 2);
        let mut out = vec![0.0; 57];
        op.apply(&z, &mut out);
        let want = &dense * DVector::from_vec(z);
        for i in 0..57 {
            assert!((out[i] - want[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn bridge_shifted_solve_matches_dense() {
        let mut xs = sample_points(80, 3);
        xs[7] = xs[20];
        xs[21] = xs[20];
        xs[0] = 0.0;
        let scale = 1.0 / (80.0 * 0.25);
        let op = BridgeGram::new(&xs, scale).unwrap();
        let y = sample_points(80, 4);
        for shift in [1e-4, 1e-2, 0.5] {
            let z = op.solve_shifted(shift, &y);
            let mut lhs = bridge_dense(&xs, scale);
            for i in 0..80 {
                lhs[(i, i)] += shift;
            }
            let resid = &lhs * DVector::from_vec(z) - DVector::from_vec(y.clone());
            assert!(resid.abs().max() < 1e-10, "shift {shift}: {}", resid.abs().max());
        }
    }

    #[test]
    fn bridge_resolvent_trace_matches_eigenvalues() {
        let mut xs = sample_points(60, 5);
        xs[1] = xs[2];
        let scale = 1.0 / (60.0 * 0.25);
        let op = BridgeGram::new(&xs, scale).unwrap();
        let eig = bridge_dense(&xs, scale).symmetric_eigen();
        for lambda in [1e-3, 0.05, 1.0] {
            let want: f64 = eig.eigenvalues.iter().map(|&t| t.max(0.0) / (t.max(0.0) + lambda)).sum();
            assert!((op.resolvent_trace(lambda) - want).abs() < 1e-9);
        }
    }

    #[test]
    fn tridiagonal_helpers() {
        let diag = vec![4.0, 5.0, 6.0, 3.0];
        let off = vec![-1.0, 2.0, -0.5];
        let dense = tridiagonal(&diag, &off);
        let rhs = vec![1.0, -2.0, 0.5, 3.0];
        let x = solve_sym_tridiagonal(&diag, &off, &rhs);
        let r = &dense * DVector::from_vec(x) - DVector::from_vec(rhs);
        assert!(r.abs().max() < 1e-14);
        let inv = dense.try_inverse().unwrap();
        for (k, d) in sym_tridiagonal_inverse_diagonal(&diag, &off).into_iter().enumerate() {
            assert!((d - inv[(k, k)]).abs() < 1e-14);
        }
    }

    #[test]
    fn lanczos_finds_top_of_bridge_spectrum() {
        let xs = sample_points(600, 6);
        let scale = 1.0 / (600.0 * 0.25);
        let op = BridgeGram::new(&xs, scale).unwrap();
        let dense = bridge_dense(&xs, scale);
        let eig = dense.clone().symmetric_eigen();
        let mut all: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        all.sort_by(|a, b| b.total_cmp(a));
        let threshold = 0.01;
        let pairs = top_eigenpairs(&op, threshold, 1e-10, 9).unwrap();
        let expect = all.iter().filter(|&&v| v >= threshold).count();
        assert_eq!(pairs.values.len(), expect);
        for (got, want) in pairs.values.iter().zip(&all) {
            assert!((got - want).abs() < 1e-10);
        }
        for (val, vec) in pairs.values.iter().zip(&pairs.vectors) {
            let av = &dense * DVector::from_column_slice(vec);
            let r = av - DVector::from_column_slice(vec) * *val;
            assert!(r.norm() < 1e-8);
        }
    }

    #[test]
    fn orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let q = random_orthogonal(9, &mut rng);
        let err = (q.transpose() * &q - DMatrix::<f64>::identity(9, 9)).abs().max();
        assert!(err < 1e-13);
    }
}
