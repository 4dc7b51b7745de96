//! Compressed-row matrices, Jacobi-preconditioned Krylov solvers and a dense
//! LU oracle for small systems.

use crate::error::{Error, Result};

/// Largest system the dense oracle accepts.
pub const DENSE_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl CsrMatrix {
    /// Square matrix from raw compressed-row arrays. Column indices must be
    /// strictly increasing within each row.
    pub fn from_parts(
        n_rows: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
        symmetric: bool,
    ) -> Self {
        assert_eq!(row_ptr.len(), n_rows + 1);
        assert_eq!(col_idx.len(), values.len());
        debug_assert!((0..n_rows).all(|r| {
            let c = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            c.windows(2).all(|w| w[0] < w[1]) && c.iter().all(|&j| j < n_rows)
        }));
        Self {
            n_rows,
            row_ptr,
            col_idx,
            values,
            symmetric,
        }
    }

    /// Keeps the nonzero entries of a row-major dense matrix.
    pub fn from_dense(rows: &[Vec<f64>], symmetric: bool) -> Self {
        let n = rows.len();
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for row in rows {
            assert_eq!(row.len(), n);
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self::from_parts(n, row_ptr, col_idx, values, symmetric)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_parts(n, (0..=n).collect(), (0..n).collect(), vec![1.0; n], true)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric_flagged(&self) -> bool {
        self.symmetric
    }

    pub fn set_symmetric_flag(&mut self, symmetric: bool) {
        self.symmetric = symmetric;
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map(|k| vals[k]).unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.get(r, r)).collect()
    }

    /// Entrywise transpose; structural zeros are preserved.
    pub fn transpose(&self) -> Self {
        let n = self.n_rows;
        let mut counts = vec![0usize; n + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..n {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                col_idx[next[c]] = r;
                values[next[c]] = v;
                next[c] += 1;
            }
        }
        Self::from_parts(n, row_ptr, col_idx, values, self.symmetric)
    }

    /// Checks the structural invariants: sorted columns, positive diagonal,
    /// and entrywise symmetry when flagged.
    pub fn validate(&self) -> Result<()> {
        for r in 0..self.n_rows {
            let (cols, _) = self.row(r);
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(format!("row {r} has unsorted columns")));
            }
            if self.get(r, r) <= 0.0 {
                return Err(Error::Config(format!("row {r} has a non-positive diagonal")));
            }
        }
        if self.symmetric {
            let t = self.transpose();
            if t.col_idx != self.col_idx || t.values != self.values {
                return Err(Error::Config("matrix flagged symmetric is not".into()));
            }
        }
        Ok(())
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_rows {
            return Err(Error::LengthMismatch {
                expected: self.n_rows,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.n_rows];
        self.matvec_into(x, &mut y);
        Ok(y)
    }

    fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            let mut s = 0.0;
            for (&c, &v) in self.col_idx[span.clone()].iter().zip(&self.values[span]) {
                s += v * x[c];
            }
            *yr = s;
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_rows]; self.n_rows];
        for (r, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c] = v;
            }
        }
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub rel_tol: f64,
    /// Defaults to `20 * n_rows` when absent.
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `||K x - b|| / ||b||` from an explicit residual evaluation.
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn true_residual(k: &CsrMatrix, x: &[f64], b: &[f64], r: &mut [f64]) -> f64 {
    k.matvec_into(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    norm(r)
}

fn check_inputs(k: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<usize> {
    if b.len() != k.n_rows {
        return Err(Error::LengthMismatch {
            expected: k.n_rows,
            got: b.len(),
        });
    }
    if !(opts.rel_tol > 0.0 && opts.rel_tol < 1.0) {
        return Err(Error::Config(format!("rel_tol must lie in (0,1), got {}", opts.rel_tol)));
    }
    Ok(opts.max_iter.unwrap_or(20 * k.n_rows.max(1)))
}

fn inverse_diagonal(k: &CsrMatrix) -> Result<Vec<f64>> {
    k.diagonal()
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            if d > 0.0 {
                Ok(1.0 / d)
            } else {
                Err(Error::Config(format!("non-positive diagonal at row {i}")))
            }
        })
        .collect()
}

/// Jacobi-preconditioned conjugate gradients for symmetric coercive systems.
pub fn solve_spd(k: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<Solution> {
    if !k.symmetric {
        return Err(Error::Config("solve_spd needs a matrix flagged symmetric".into()));
    }
    let max_iter = check_inputs(k, b, opts)?;
    let n = k.n_rows;
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(Solution {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    let target = opts.rel_tol * b_norm;
    let inv_diag = inverse_diagonal(k)?;
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut it = 0;
    while it < max_iter {
        k.matvec_into(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            break;
        }
        let step = rz / pq;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * q[i];
        }
        it += 1;
        if norm(&r) <= target {
            // The recursive residual drifts; confirm against the true one.
            let res = true_residual(k, &x, b, &mut r);
            if res <= target {
                return Ok(Solution {
                    x,
                    iterations: it,
                    residual: res / b_norm,
                });
            }
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = true_residual(k, &x, b, &mut r) / b_norm;
    if res <= opts.rel_tol {
        return Ok(Solution {
            x,
            iterations: it,
            residual: res,
        });
    }
    Err(Error::NotConverged {
        iterations: it,
        residual: res,
    })
}

/// Jacobi (right) preconditioned BiCGStab for general coercive systems.
pub fn solve_general(k: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<Solution> {
    let max_iter = check_inputs(k, b, opts)?;
    let n = k.n_rows;
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(Solution {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    let target = opts.rel_tol * b_norm;
    let inv_diag = inverse_diagonal(k)?;
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut it = 0;

    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut zs = vec![0.0; n];

    // Outer loop restarts from the true residual after a breakdown or a
    // drifted recursive residual.
    while it < max_iter {
        let r_hat = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        p.fill(0.0);
        v.fill(0.0);
        let mut restart = false;
        while it < max_iter {
            let rho_new = dot(&r_hat, &r);
            if rho_new.abs() < 1e-300 {
                restart = true;
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
                y[i] = p[i] * inv_diag[i];
            }
            k.matvec_into(&y, &mut v);
            let denom = dot(&r_hat, &v);
            if denom.abs() < 1e-300 {
                restart = true;
                break;
            }
            alpha = rho / denom;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            it += 1;
            if norm(&s) <= target {
                for i in 0..n {
                    x[i] += alpha * y[i];
                }
                let res = true_residual(k, &x, b, &mut r);
                if res <= target {
                    return Ok(Solution {
                        x,
                        iterations: it,
                        residual: res / b_norm,
                    });
                }
                restart = true;
                break;
            }
            for i in 0..n {
                zs[i] = s[i] * inv_diag[i];
            }
            k.matvec_into(&zs, &mut t);
            let tt = dot(&t, &t);
            omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
            for i in 0..n {
                x[i] += alpha * y[i] + omega * zs[i];
                r[i] = s[i] - omega * t[i];
            }
            if norm(&r) <= target {
                let res = true_residual(k, &x, b, &mut r);
                if res <= target {
                    return Ok(Solution {
                        x,
                        iterations: it,
                        residual: res / b_norm,
                    });
                }
                restart = true;
                break;
            }
            if omega == 0.0 {
                restart = true;
                break;
            }
        }
        if restart {
            true_residual(k, &x, b, &mut r);
        }
    }
    let res = true_residual(k, &x, b, &mut r) / b_norm;
    Err(Error::NotConverged {
        iterations: it,
        residual: res,
    })
}

/// Conjugate gradients when the matrix is flagged symmetric, BiCGStab
/// otherwise.
pub fn solve(k: &CsrMatrix, b: &[f64], opts: &SolverOptions) -> Result<Solution> {
    if k.symmetric {
        solve_spd(k, b, opts)
    } else {
        solve_general(k, b, opts)
    }
}

/// Dense LU factorisation with partial pivoting.
#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    pub fn factor(k: &CsrMatrix) -> Result<Self> {
        let n = k.n_rows;
        if n > DENSE_CAP {
            return Err(Error::TooLarge { cap: DENSE_CAP, got: n });
        }
        let mut lu = vec![0.0; n * n];
        for r in 0..n {
            let (cols, vals) = k.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                lu[r * n + c] = v;
            }
        }
        let scale = lu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tiny = (n.max(1) as f64) * f64::EPSILON * scale;
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let (piv, pmax) = (col..n)
                .map(|r| (r, lu[r * n + col].abs()))
                .fold((col, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            if pmax <= tiny {
                return Err(Error::Singular(col));
            }
            if piv != col {
                for j in 0..n {
                    lu.swap(col * n + j, piv * n + j);
                }
                perm.swap(col, piv);
            }
            let d = lu[col * n + col];
            for r in (col + 1)..n {
                let f = lu[r * n + col] / d;
                if f == 0.0 {
                    continue;
                }
                lu[r * n + col] = f;
                for j in (col + 1)..n {
                    lu[r * n + j] -= f * lu[col * n + j];
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: b.len() });
        }
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut s = x[r];
            for j in 0..r {
                s -= self.lu[r * n + j] * x[j];
            }
            x[r] = s;
        }
        for r in (0..n).rev() {
            let mut s = x[r];
            for j in (r + 1)..n {
                s -= self.lu[r * n + j] * x[j];
            }
            x[r] = s / self.lu[r * n + r];
        }
        Ok(x)
    }
}

/// Direct solve by dense elimination; the reference for solver tests.
pub fn dense_solve(k: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    DenseLu::factor(k)?.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tridiag() -> CsrMatrix {
        CsrMatrix::from_dense(&[vec![2.0, -1.0], vec![-1.0, 2.0]], true)
    }

    #[test]
    fn matvec_examples() {
        let id = CsrMatrix::identity(3);
        assert_eq!(id.matvec(&[1.5, -2.0, 3.0]).unwrap(), vec![1.5, -2.0, 3.0]);
        let k = tridiag();
        assert_eq!(k.matvec(&[1.0, 1.0]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(k.matvec(&[1.0, 0.0]).unwrap(), vec![2.0, -1.0]);
        assert!(matches!(k.matvec(&[1.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn spd_two_by_two() {
        let s = solve_spd(&tridiag(), &[1.0, 0.0], &SolverOptions::default()).unwrap();
        assert_abs_diff_eq!(s.x[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.x[1], 1.0 / 3.0, epsilon = 1e-12);
        assert!(s.residual <= 1e-10);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let s = solve_spd(&tridiag(), &[0.0, 0.0], &SolverOptions::default()).unwrap();
        assert_eq!(s.x, vec![0.0, 0.0]);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn general_examples() {
        let s = solve_general(&tridiag(), &[1.0, 0.0], &SolverOptions::default()).unwrap();
        assert_abs_diff_eq!(s.x[0], 2.0 / 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.x[1], 1.0 / 3.0, epsilon = 1e-10);

        let k = CsrMatrix::from_dense(&[vec![2.0, 1.0], vec![-1.0, 2.0]], false);
        let s = solve_general(&k, &[3.0, 1.0], &SolverOptions::default()).unwrap();
        assert_abs_diff_eq!(s.x[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.x[1], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn spd_requires_symmetric_flag() {
        let k = CsrMatrix::from_dense(&[vec![2.0, 1.0], vec![-1.0, 2.0]], false);
        assert!(solve_spd(&k, &[1.0, 1.0], &SolverOptions::default()).is_err());
    }

    #[test]
    fn bad_tolerance_rejected() {
        let opts = SolverOptions { rel_tol: 1.5, max_iter: None };
        assert!(matches!(solve_spd(&tridiag(), &[1.0, 0.0], &opts), Err(Error::Config(_))));
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let n: usize = 50;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| match i.abs_diff(j) {
                        0 => 2.0,
                        1 => -1.0,
                        _ => 0.0,
                    })
                    .collect()
            })
            .collect();
        let k = CsrMatrix::from_dense(&rows, true);
        let b = vec![1.0; n];
        let opts = SolverOptions { rel_tol: 1e-12, max_iter: Some(3) };
        match solve_spd(&k, &b, &opts) {
            Err(Error::NotConverged { iterations, residual }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-12);
            }
            other => panic!("expected a convergence failure, got {other:?}"),
        }
    }

    #[test]
    fn dense_examples() {
        assert_eq!(dense_solve(&CsrMatrix::identity(4), &[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        let x = dense_solve(&tridiag(), &[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(x[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], 1.0 / 3.0, epsilon = 1e-15);
        let singular = CsrMatrix::from_dense(&[vec![1.0, 1.0], vec![1.0, 1.0]], true);
        assert!(matches!(dense_solve(&singular, &[1.0, 2.0]), Err(Error::Singular(_))));
    }

    #[test]
    fn dense_cap() {
        let big = CsrMatrix::identity(DENSE_CAP + 1);
        assert!(matches!(DenseLu::factor(&big), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn transpose_and_validate() {
        let k = CsrMatrix::from_dense(
            &[vec![4.0, 1.0, 0.0], vec![0.0, 3.0, -2.0], vec![5.0, 0.0, 1.0]],
            false,
        );
        let t = k.transpose();
        assert_eq!(t.to_dense(), vec![vec![4.0, 0.0, 5.0], vec![1.0, 3.0, 0.0], vec![0.0, -2.0, 1.0]]);
        assert_eq!(t.transpose(), k);
        k.validate().unwrap();
        let mut lie = k.clone();
        lie.set_symmetric_flag(true);
        assert!(lie.validate().is_err());
    }

    #[test]
    fn solves_are_deterministic() {
        let k = CsrMatrix::from_dense(
            &[vec![4.0, 1.0, 0.0], vec![-1.0, 3.0, -2.0], vec![0.5, 0.0, 2.0]],
            false,
        );
        let b = [1.0, -2.0, 0.3];
        let a = solve_general(&k, &b, &SolverOptions::default()).unwrap();
        let c = solve_general(&k, &b, &SolverOptions::default()).unwrap();
        assert_eq!(a, c);
    }
}
