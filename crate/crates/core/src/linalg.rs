//! Matrix-free Krylov solvers with Jacobi preconditioning, and a banded
//! direct solver for the transport matrix.
//!
//! Reductions are sequential so that results are bit-reproducible.

use crate::error::{Error, Result};

pub trait LinearOperator {
    fn len(&self) -> usize;
    /// `y = A x`.
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once `||r||_2 <= rel_tol * ||b||_2` ...
    pub rel_tol: f64,
    /// ... and `||r||_inf <= abs_tol`.
    pub abs_tol: f64,
    pub max_iter: usize,
}

impl SolverOptions {
    pub fn new(rel_tol: f64, abs_tol: f64, max_iter: usize) -> Self {
        Self {
            rel_tol,
            abs_tol,
            max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final true relative residual `||b - A x||_2 / ||b||_2`.
    pub relative_residual: f64,
    /// Final true `||b - A x||_inf`.
    pub max_residual: f64,
    /// Relative residual after each iteration.
    pub history: Vec<f64>,
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn remove_mean(a: &mut [f64]) {
    let mean = a.iter().sum::<f64>() / a.len() as f64;
    for v in a.iter_mut() {
        *v -= mean;
    }
}

fn true_residual(op: &dyn LinearOperator, b: &[f64], x: &[f64], r: &mut [f64]) {
    op.apply(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
}

/// Multiple of `eps (|A| |x| + |b|)` accepted as a residual floor.
const ROUNDOFF_FACTOR: f64 = 64.0;

/// The absolute residual target, raised to what rounding in `A x` permits.
/// `|A|` is estimated as twice the largest diagonal entry.
fn absolute_limit(abs_tol: f64, inv_diag: &[f64], b: &[f64]) -> impl Fn(&[f64]) -> f64 {
    let a_norm = 2.0 * inv_diag.iter().fold(0.0f64, |m, d| m.max(1.0 / d.abs()));
    let b_max = norm_inf(b);
    move |x: &[f64]| abs_tol.max(ROUNDOFF_FACTOR * f64::EPSILON * (a_norm * norm_inf(x) + b_max))
}

fn inverse_diagonal(op: &dyn LinearOperator) -> Vec<f64> {
    op.diagonal()
        .into_iter()
        .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect()
}

/// Jacobi-preconditioned conjugate gradients for a symmetric positive
/// (semi)definite operator.
///
/// With `zero_mean` set the operator is assumed to annihilate constants; the
/// right-hand side must have zero mean, and every iterate, residual and search
/// direction is kept in the zero-mean subspace.
pub fn conjugate_gradient(
    op: &dyn LinearOperator,
    b: &[f64],
    x: &mut [f64],
    opts: &SolverOptions,
    zero_mean: bool,
) -> Result<SolveStats> {
    let n = op.len();
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);
    let b_norm = norm2(b);
    let mut stats = SolveStats::default();
    if zero_mean {
        remove_mean(x);
    }
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(stats);
    }
    let inv_diag = inverse_diagonal(op);
    let abs_limit = absolute_limit(opts.abs_tol, &inv_diag, b);
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];

    // Outer loop restarts from the true residual whenever the recursive one
    // claims convergence but the true one disagrees.
    loop {
        true_residual(op, b, x, &mut r);
        if zero_mean {
            remove_mean(&mut r);
        }
        let rel = norm2(&r) / b_norm;
        let max = norm_inf(&r);
        stats.relative_residual = rel;
        stats.max_residual = max;
        if rel <= opts.rel_tol && max <= abs_limit(x) {
            return Ok(stats);
        }
        if stats.iterations >= opts.max_iter {
            return Err(Error::NotConverged {
                solver: "conjugate gradient",
                iterations: stats.iterations,
                residual: rel,
                history: stats.history,
            });
        }

        for k in 0..n {
            z[k] = inv_diag[k] * r[k];
        }
        if zero_mean {
            remove_mean(&mut z);
        }
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        let mut stagnated = 0usize;
        let mut best = rel;

        while stats.iterations < opts.max_iter {
            op.apply(&p, &mut q);
            let pq = dot(&p, &q);
            if pq <= 0.0 || !pq.is_finite() {
                break;
            }
            let alpha = rz / pq;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * q[k];
            }
            stats.iterations += 1;
            let rel = norm2(&r) / b_norm;
            stats.history.push(rel);
            if rel <= opts.rel_tol && norm_inf(&r) <= abs_limit(x) {
                break;
            }
            if rel < 0.5 * best {
                best = rel;
                stagnated = 0;
            } else {
                stagnated += 1;
                if stagnated > 4 * n.max(50) {
                    break;
                }
            }
            for k in 0..n {
                z[k] = inv_diag[k] * r[k];
            }
            if zero_mean {
                remove_mean(&mut z);
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        if zero_mean {
            remove_mean(x);
        }
        // Guard against an endless restart loop at the round-off floor.
        let mut check = vec![0.0; n];
        true_residual(op, b, x, &mut check);
        if zero_mean {
            remove_mean(&mut check);
        }
        let rel_now = norm2(&check) / b_norm;
        if rel_now >= stats.relative_residual && norm_inf(&check) >= stats.max_residual {
            return Err(Error::NotConverged {
                solver: "conjugate gradient",
                iterations: stats.iterations,
                residual: rel_now,
                history: stats.history,
            });
        }
    }
}

/// Jacobi right-preconditioned BiCGSTAB for nonsymmetric operators.
pub fn bicgstab(
    op: &dyn LinearOperator,
    b: &[f64],
    x: &mut [f64],
    opts: &SolverOptions,
) -> Result<SolveStats> {
    let n = op.len();
    assert_eq!(b.len(), n);
    let b_norm = norm2(b);
    let mut stats = SolveStats::default();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(stats);
    }
    let inv_diag = inverse_diagonal(op);
    let abs_limit = absolute_limit(opts.abs_tol, &inv_diag, b);
    let mut r = vec![0.0; n];
    let mut r_hat = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut zs = vec![0.0; n];

    loop {
        true_residual(op, b, x, &mut r);
        let rel = norm2(&r) / b_norm;
        let max = norm_inf(&r);
        let previous = (stats.relative_residual, stats.max_residual);
        stats.relative_residual = rel;
        stats.max_residual = max;
        if rel <= opts.rel_tol && max <= abs_limit(x) {
            return Ok(stats);
        }
        if stats.iterations >= opts.max_iter
            || (stats.iterations > 0 && rel >= previous.0 && max >= previous.1)
        {
            return Err(Error::NotConverged {
                solver: "BiCGSTAB",
                iterations: stats.iterations,
                residual: rel,
                history: stats.history,
            });
        }

        r_hat.copy_from_slice(&r);
        let mut rho = 1.0;
        let mut alpha = 1.0;
        let mut omega = 1.0;
        v.iter_mut().for_each(|e| *e = 0.0);
        p.iter_mut().for_each(|e| *e = 0.0);

        while stats.iterations < opts.max_iter {
            let rho_next = dot(&r_hat, &r);
            if rho_next == 0.0 || !rho_next.is_finite() {
                break;
            }
            let beta = (rho_next / rho) * (alpha / omega);
            rho = rho_next;
            for k in 0..n {
                p[k] = r[k] + beta * (p[k] - omega * v[k]);
            }
            for k in 0..n {
                y[k] = inv_diag[k] * p[k];
            }
            op.apply(&y, &mut v);
            let rv = dot(&r_hat, &v);
            if rv == 0.0 || !rv.is_finite() {
                break;
            }
            alpha = rho / rv;
            for k in 0..n {
                s[k] = r[k] - alpha * v[k];
            }
            stats.iterations += 1;
            let s_rel = norm2(&s) / b_norm;
            if s_rel <= opts.rel_tol && norm_inf(&s) <= abs_limit(x) {
                for k in 0..n {
                    x[k] += alpha * y[k];
                }
                stats.history.push(s_rel);
                break;
            }
            for k in 0..n {
                zs[k] = inv_diag[k] * s[k];
            }
            op.apply(&zs, &mut t);
            let tt = dot(&t, &t);
            if tt == 0.0 {
                for k in 0..n {
                    x[k] += alpha * y[k];
                }
                break;
            }
            omega = dot(&t, &s) / tt;
            for k in 0..n {
                x[k] += alpha * y[k] + omega * zs[k];
                r[k] = s[k] - omega * t[k];
            }
            let rel = norm2(&r) / b_norm;
            stats.history.push(rel);
            if rel <= opts.rel_tol && norm_inf(&r) <= abs_limit(x) {
                break;
            }
            if omega == 0.0 {
                break;
            }
        }
    }
}

/// Square matrix stored by diagonals within a symmetric half-bandwidth.
///
/// Factorised in place by Gaussian elimination without pivoting, which is
/// stable for the column diagonally dominant M-matrices assembled here.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    bw: usize,
    /// Row `i` holds columns `i - bw ..= i + bw`.
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (2 * bw + 1)],
        }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.bw >= i && j <= i + self.bw);
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let s = self.slot(i, j);
        self.data[s] += value;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.bw < i || j > i + self.bw {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// In-place LU factorisation (unit lower factor stored below the diagonal).
    pub fn factor(mut self) -> Result<BandedLu> {
        let (n, bw) = (self.n, self.bw);
        for k in 0..n {
            let pivot = self.data[self.slot(k, k)];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::Degenerate(format!("zero pivot at row {k}")));
            }
            let last = (k + bw).min(n - 1);
            for i in k + 1..=last {
                let sik = self.slot(i, k);
                let l = self.data[sik] / pivot;
                if l == 0.0 {
                    continue;
                }
                self.data[sik] = l;
                for j in k + 1..=last {
                    let skj = self.slot(k, j);
                    let sij = self.slot(i, j);
                    self.data[sij] -= l * self.data[skj];
                }
            }
        }
        Ok(BandedLu { inner: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    inner: BandedMatrix,
}

impl BandedLu {
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let m = &self.inner;
        let (n, bw) = (m.n, m.bw);
        for i in 0..n {
            let first = i.saturating_sub(bw);
            let mut acc = x[i];
            for j in first..i {
                acc -= m.data[m.slot(i, j)] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let last = (i + bw).min(n - 1);
            let mut acc = x[i];
            for j in i + 1..=last {
                acc -= m.data[m.slot(i, j)] * x[j];
            }
            x[i] = acc / m.data[m.slot(i, i)];
        }
    }
}

/// Solves `A x = b` by iterative refinement of the guess in `x`, using the
/// banded factorisation for every correction, until the residual targets are
/// met.
pub fn banded_direct(
    op: &dyn LinearOperator,
    lu: &BandedLu,
    b: &[f64],
    x: &mut [f64],
    opts: &SolverOptions,
) -> Result<SolveStats> {
    let n = op.len();
    let b_norm = norm2(b);
    let mut stats = SolveStats::default();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(stats);
    }
    // Refinement starts from the caller's guess, so an exact guess is kept.
    let mut r = vec![0.0; n];
    loop {
        true_residual(op, b, x, &mut r);
        let rel = norm2(&r) / b_norm;
        let max = norm_inf(&r);
        stats.relative_residual = rel;
        stats.max_residual = max;
        stats.history.push(rel);
        if rel <= opts.rel_tol && max <= opts.abs_tol {
            return Ok(stats);
        }
        if stats.iterations >= opts.max_iter.min(6) {
            return Err(Error::NotConverged {
                solver: "banded LU",
                iterations: stats.iterations,
                residual: rel,
                history: stats.history,
            });
        }
        lu.solve_in_place(&mut r);
        for (xi, d) in x.iter_mut().zip(&r) {
            *xi += d;
        }
        stats.iterations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dense test operator.
    struct Dense {
        n: usize,
        a: Vec<f64>,
    }

    impl LinearOperator for Dense {
        fn len(&self) -> usize {
            self.n
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            for i in 0..self.n {
                y[i] = (0..self.n).map(|j| self.a[i * self.n + j] * x[j]).sum();
            }
        }
        fn diagonal(&self) -> Vec<f64> {
            (0..self.n).map(|i| self.a[i * self.n + i]).collect()
        }
    }

    /// 1-D Neumann Laplacian: singular, constants in the kernel.
    fn neumann(n: usize) -> Dense {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            if i > 0 {
                a[i * n + i - 1] = -1.0;
                a[i * n + i] += 1.0;
            }
            if i + 1 < n {
                a[i * n + i + 1] = -1.0;
                a[i * n + i] += 1.0;
            }
        }
        Dense { n, a }
    }

    #[test]
    fn cg_solves_zero_mean_neumann_problem() {
        let op = neumann(20);
        let mut b: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin()).collect();
        remove_mean(&mut b);
        let mut x = vec![1.0; 20];
        let opts = SolverOptions::new(1e-12, 1e-12, 1000);
        let stats = conjugate_gradient(&op, &b, &mut x, &opts, true).unwrap();
        assert!(stats.relative_residual <= 1e-12);
        assert!(x.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn cg_reports_iteration_cap() {
        let op = neumann(50);
        let mut b: Vec<f64> = (0..50).map(|i| i as f64).collect();
        remove_mean(&mut b);
        let mut x = vec![0.0; 50];
        let err = conjugate_gradient(&op, &b, &mut x, &SolverOptions::new(1e-14, 1e-14, 3), true).unwrap_err();
        match err {
            Error::NotConverged { history, .. } => assert_eq!(history.len(), 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn bicgstab_solves_upwind_system() {
        let n = 30;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 3.0;
            if i > 0 {
                a[i * n + i - 1] = -2.0;
            }
            if i + 1 < n {
                a[i * n + i + 1] = -0.5;
            }
        }
        let op = Dense { n, a };
        let b: Vec<f64> = (0..n).map(|i| 1.0 + (i % 3) as f64).collect();
        let mut x = vec![0.0; n];
        let stats = bicgstab(&op, &b, &mut x, &SolverOptions::new(1e-13, 1e-13, 500)).unwrap();
        let mut r = vec![0.0; n];
        op.apply(&x, &mut r);
        let err = r.iter().zip(&b).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
        assert!(err <= 1e-12, "{err} after {}", stats.iterations);
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let op = neumann(5);
        let mut x = vec![3.0; 5];
        conjugate_gradient(&op, &[0.0; 5], &mut x, &SolverOptions::new(1e-10, 1e-10, 10), true).unwrap();
        assert!(x.iter().all(|v| *v == 0.0));
    }
    #[test]
    fn banded_lu_matches_dense_solution() {
        let n = 12;
        let bw = 3;
        let mut band = BandedMatrix::zeros(n, bw);
        let mut dense = vec![0.0; n * n];
        for i in 0..n {
            for j in i.saturating_sub(bw)..=(i + bw).min(n - 1) {
                let v = if i == j { 10.0 } else { -1.0 / (1.0 + (i + 2 * j) as f64) };
                band.add(i, j, v);
                dense[i * n + j] = v;
            }
        }
        assert_eq!(band.get(0, 11), 0.0);
        let op = Dense { n, a: dense };
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let lu = band.factor().unwrap();
        let mut x = vec![0.0; n];
        let stats = banded_direct(&op, &lu, &b, &mut x, &SolverOptions::new(1e-15, 1e-15, 5)).unwrap();
        assert!(stats.max_residual <= 1e-15);
    }
}
