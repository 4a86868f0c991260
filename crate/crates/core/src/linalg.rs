//! Compressed sparse row matrices, the products needed by the assembly, and
//! Dirichlet-restricted symmetric solves.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Col, Side};

use crate::error::{FemError, Result};

/// Relative residual every restricted solve has to reach.
pub const SOLVE_TOLERANCE: f64 = 1e-10;

/// Sparse matrix in compressed row storage with sorted, unique column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
            symmetric: n_rows == n_cols,
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
            symmetric: true,
        }
    }

    /// Builds a matrix from `(i, j, v)` triplets; entries sharing `(i, j)` are summed.
    ///
    /// Explicit zeros are kept in the pattern.
    pub fn from_triplets(rows: &[usize], cols: &[usize], vals: &[f64], n_rows: usize, n_cols: usize) -> Result<Self> {
        if rows.len() != cols.len() || rows.len() != vals.len() {
            return Err(FemError::Construction(format!(
                "triplet arrays differ in length: {} rows, {} cols, {} values",
                rows.len(),
                cols.len(),
                vals.len()
            )));
        }
        if let Some(k) = rows.iter().position(|&i| i >= n_rows) {
            return Err(FemError::Construction(format!("row index {} out of range 0..{n_rows}", rows[k])));
        }
        if let Some(k) = cols.iter().position(|&j| j >= n_cols) {
            return Err(FemError::Construction(format!("column index {} out of range 0..{n_cols}", cols[k])));
        }

        // Bucket by column first, then scatter by row in column order: each row
        // then receives its entries with nondecreasing column index.
        let nnz = rows.len();
        let mut col_ptr = vec![0usize; n_cols + 1];
        for &j in cols {
            col_ptr[j + 1] += 1;
        }
        for j in 0..n_cols {
            col_ptr[j + 1] += col_ptr[j];
        }
        let mut by_col = vec![0usize; nnz];
        let mut next = col_ptr.clone();
        for (k, &j) in cols.iter().enumerate() {
            by_col[next[j]] = k;
            next[j] += 1;
        }

        let mut row_cnt = vec![0usize; n_rows + 1];
        for &i in rows {
            row_cnt[i + 1] += 1;
        }
        for i in 0..n_rows {
            row_cnt[i + 1] += row_cnt[i];
        }
        let mut tmp_col = vec![0usize; nnz];
        let mut tmp_val = vec![0f64; nnz];
        let mut next = row_cnt.clone();
        for &k in &by_col {
            let i = rows[k];
            tmp_col[next[i]] = cols[k];
            tmp_val[next[i]] = vals[k];
            next[i] += 1;
        }

        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for i in 0..n_rows {
            let start = col_idx.len();
            for k in row_cnt[i]..row_cnt[i + 1] {
                let j = tmp_col[k];
                if col_idx.len() > start && *col_idx.last().unwrap() == j {
                    *values.last_mut().unwrap() += tmp_val[k];
                } else {
                    col_idx.push(j);
                    values.push(tmp_val[k]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparseMatrix { n_rows, n_cols, row_ptr, col_idx, values, symmetric: false })
    }

    /// Builds a matrix directly from compressed arrays, validating them.
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != n_rows + 1 || row_ptr[0] != 0 || *row_ptr.last().unwrap() != col_idx.len() {
            return Err(FemError::Construction("malformed row offsets".into()));
        }
        if col_idx.len() != values.len() {
            return Err(FemError::Construction("column and value arrays differ in length".into()));
        }
        for i in 0..n_rows {
            let r = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if r.windows(2).any(|w| w[0] >= w[1]) || r.iter().any(|&j| j >= n_cols) {
                return Err(FemError::Construction(format!("row {i} has unsorted or out-of-range columns")));
            }
        }
        Ok(SparseMatrix { n_rows, n_cols, row_ptr, col_idx, values, symmetric: false })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn set_symmetric(&mut self, symmetric: bool) {
        self.symmetric = symmetric;
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    /// Stored value at `(i, j)`, zero when outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        match c.binary_search(&j) {
            Ok(k) => v[k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, row) in a.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                row[j] += x;
            }
        }
        a
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A - A^T|` over all entries.
    pub fn symmetry_defect(&self) -> f64 {
        let t = self.transpose();
        let mut worst = 0.0f64;
        for i in 0..self.n_rows {
            let (ca, va) = self.row(i);
            let (cb, vb) = t.row(i);
            let (mut a, mut b) = (0, 0);
            while a < ca.len() || b < cb.len() {
                let d = if b == cb.len() || (a < ca.len() && ca[a] < cb[b]) {
                    a += 1;
                    va[a - 1]
                } else if a == ca.len() || cb[b] < ca[a] {
                    b += 1;
                    vb[b - 1]
                } else {
                    a += 1;
                    b += 1;
                    va[a - 1] - vb[b - 1]
                };
                worst = worst.max(d.abs());
            }
        }
        worst
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut cnt = vec![0usize; self.n_cols + 1];
        for &j in &self.col_idx {
            cnt[j + 1] += 1;
        }
        for j in 0..self.n_cols {
            cnt[j + 1] += cnt[j];
        }
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0f64; self.nnz()];
        let mut next = cnt.clone();
        for i in 0..self.n_rows {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                col_idx[next[j]] = i;
                values[next[j]] = x;
                next[j] += 1;
            }
        }
        SparseMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr: cnt,
            col_idx,
            values,
            symmetric: self.symmetric,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols, "matvec dimension mismatch");
        (0..self.n_rows)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum()
            })
            .collect()
    }

    /// Sparse product `self * other` (row-wise Gustavson).
    pub fn matmul(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        if self.n_cols != other.n_rows {
            return Err(FemError::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let n = other.n_cols;
        let mut marker = vec![usize::MAX; n];
        let mut acc = vec![0f64; n];
        let mut row_ptr = Vec::with_capacity(self.n_rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut touched: Vec<usize> = Vec::new();
        row_ptr.push(0);
        for i in 0..self.n_rows {
            touched.clear();
            let (ca, va) = self.row(i);
            for (&k, &a) in ca.iter().zip(va) {
                let (cb, vb) = other.row(k);
                for (&j, &b) in cb.iter().zip(vb) {
                    if marker[j] != i {
                        marker[j] = i;
                        acc[j] = a * b;
                        touched.push(j);
                    } else {
                        acc[j] += a * b;
                    }
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                col_idx.push(j);
                values.push(acc[j]);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparseMatrix { n_rows: self.n_rows, n_cols: n, row_ptr, col_idx, values, symmetric: false })
    }

    /// `alpha * self + beta * other` over the union of both patterns.
    pub fn add_scaled(&self, alpha: f64, other: &SparseMatrix, beta: f64) -> Result<SparseMatrix> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(FemError::DimensionMismatch(format!(
                "cannot add {}x{} and {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut row_ptr = Vec::with_capacity(self.n_rows + 1);
        let mut col_idx = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut values = Vec::with_capacity(self.nnz().max(other.nnz()));
        row_ptr.push(0);
        for i in 0..self.n_rows {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut a, mut b) = (0, 0);
            while a < ca.len() || b < cb.len() {
                if b == cb.len() || (a < ca.len() && ca[a] < cb[b]) {
                    col_idx.push(ca[a]);
                    values.push(alpha * va[a]);
                    a += 1;
                } else if a == ca.len() || cb[b] < ca[a] {
                    col_idx.push(cb[b]);
                    values.push(beta * vb[b]);
                    b += 1;
                } else {
                    col_idx.push(ca[a]);
                    values.push(alpha * va[a] + beta * vb[b]);
                    a += 1;
                    b += 1;
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            values,
            symmetric: self.symmetric && other.symmetric,
        })
    }

    /// Adds `other` into `self` in place. Every entry of `other` must already be
    /// part of the pattern of `self`; returns `false` (leaving `self` partially
    /// updated) otherwise.
    pub fn accumulate_in_pattern(&mut self, other: &SparseMatrix) -> bool {
        debug_assert_eq!(self.n_rows, other.n_rows);
        for i in 0..other.n_rows {
            let (cb, vb) = other.row(i);
            if cb.is_empty() {
                continue;
            }
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            let cols = &self.col_idx[r.clone()];
            let vals = &mut self.values[r];
            let mut pos = 0;
            for (&j, &x) in cb.iter().zip(vb) {
                // both column lists are sorted, so the search window only shrinks
                match cols[pos..].binary_search(&j) {
                    Ok(k) => {
                        pos += k;
                        vals[pos] += x;
                    }
                    Err(_) => return false,
                }
            }
        }
        true
    }

    /// Submatrix made of the listed rows (in the given order).
    pub fn select_rows(&self, rows: &[usize]) -> SparseMatrix {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for &i in rows {
            let (c, v) = self.row(i);
            col_idx.extend_from_slice(c);
            values.extend_from_slice(v);
            row_ptr.push(col_idx.len());
        }
        SparseMatrix { n_rows: rows.len(), n_cols: self.n_cols, row_ptr, col_idx, values, symmetric: false }
    }
}

/// `B^T D B`, flagged symmetric when `D` is.
pub fn sandwich(b: &SparseMatrix, d: &SparseMatrix) -> Result<SparseMatrix> {
    sandwich_with_transpose(&b.transpose(), b, d)
}

/// Same as [`sandwich`] with a precomputed `B^T`.
pub fn sandwich_with_transpose(bt: &SparseMatrix, b: &SparseMatrix, d: &SparseMatrix) -> Result<SparseMatrix> {
    if d.n_rows != d.n_cols {
        return Err(FemError::DimensionMismatch(format!("D must be square, got {}x{}", d.n_rows, d.n_cols)));
    }
    if d.n_cols != b.n_rows || bt.n_cols != b.n_rows || bt.n_rows != b.n_cols {
        return Err(FemError::DimensionMismatch(format!(
            "B is {}x{}, D is {}x{}",
            b.n_rows, b.n_cols, d.n_rows, d.n_cols
        )));
    }
    let db = d.matmul(b)?;
    let mut k = bt.matmul(&db)?;
    k.symmetric = d.symmetric;
    Ok(k)
}

/// `sqrt(v^T K v)`, with tiny negative round-off clamped to zero.
pub fn energy_norm(k: &SparseMatrix, v: &[f64]) -> f64 {
    let kv = k.matvec(v);
    let q: f64 = kv.iter().zip(v).map(|(a, b)| a * b).sum();
    q.max(0.0).sqrt()
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Linear solver used for the restricted systems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LinearSolverKind {
    /// Sparse Cholesky with an LU fallback for indefinite matrices.
    #[default]
    Direct,
    /// Conjugate gradients with a diagonal preconditioner.
    Pcg,
}

/// Solves `K[free, free] x_free = rhs[free]` and returns `x` with zeros on the
/// constrained entries.
pub fn restricted_solve(k: &SparseMatrix, rhs: &[f64], free: &[bool]) -> Result<Vec<f64>> {
    RestrictedSolver::new(free, LinearSolverKind::Direct).solve(k, rhs)
}

/// Restricted solver that keeps the free-dof numbering and reuses the symbolic
/// factorization while the sparsity pattern stays the same.
pub struct RestrictedSolver {
    kind: LinearSolverKind,
    free_index: Vec<usize>,
    global_to_free: Vec<usize>,
    cached: Option<CachedSymbolic>,
}

struct CachedSymbolic {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    llt: Option<SymbolicLlt<usize>>,
}

impl RestrictedSolver {
    pub fn new(free: &[bool], kind: LinearSolverKind) -> Self {
        let free_index: Vec<usize> = (0..free.len()).filter(|&i| free[i]).collect();
        let mut global_to_free = vec![usize::MAX; free.len()];
        for (f, &g) in free_index.iter().enumerate() {
            global_to_free[g] = f;
        }
        RestrictedSolver { kind, free_index, global_to_free, cached: None }
    }

    pub fn n_free(&self) -> usize {
        self.free_index.len()
    }

    pub fn solve(&mut self, k: &SparseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.global_to_free.len();
        if k.n_rows != n || k.n_cols != n || rhs.len() != n {
            return Err(FemError::DimensionMismatch(format!(
                "K is {}x{}, rhs has {} entries, mask has {}",
                k.n_rows,
                k.n_cols,
                rhs.len(),
                n
            )));
        }
        let kff = self.restrict(k);
        let bf: Vec<f64> = self.free_index.iter().map(|&g| rhs[g]).collect();
        let xf = if bf.iter().all(|&v| v == 0.0) {
            vec![0.0; bf.len()]
        } else {
            match self.kind {
                LinearSolverKind::Direct => self.solve_direct(&kff, &bf)?,
                LinearSolverKind::Pcg => pcg(&kff, &bf, SOLVE_TOLERANCE, 10 * bf.len().max(1))?,
            }
        };
        let mut x = vec![0.0; n];
        for (f, &g) in self.free_index.iter().enumerate() {
            x[g] = xf[f];
        }
        Ok(x)
    }

    fn restrict(&self, k: &SparseMatrix) -> SparseMatrix {
        let mut row_ptr = Vec::with_capacity(self.free_index.len() + 1);
        let mut col_idx = Vec::with_capacity(k.nnz());
        let mut values = Vec::with_capacity(k.nnz());
        row_ptr.push(0);
        for &g in &self.free_index {
            let (c, v) = k.row(g);
            for (&j, &x) in c.iter().zip(v) {
                let f = self.global_to_free[j];
                if f != usize::MAX {
                    col_idx.push(f);
                    values.push(x);
                }
            }
            row_ptr.push(col_idx.len());
        }
        let nf = self.free_index.len();
        SparseMatrix { n_rows: nf, n_cols: nf, row_ptr, col_idx, values, symmetric: k.symmetric }
    }

    fn solve_direct(&mut self, kff: &SparseMatrix, bf: &[f64]) -> Result<Vec<f64>> {
        // CSR of a symmetric matrix is its own CSC; otherwise transpose first.
        let csc = if kff.symmetric { None } else { Some(kff.transpose()) };
        let m = csc.as_ref().unwrap_or(kff);
        let n = m.n_rows;

        let same_pattern = self
            .cached
            .as_ref()
            .map(|c| c.col_ptr == m.row_ptr && c.row_idx == m.col_idx)
            .unwrap_or(false);
        if !same_pattern {
            self.cached = Some(CachedSymbolic { col_ptr: m.row_ptr.clone(), row_idx: m.col_idx.clone(), llt: None });
        }
        let cache = self.cached.as_mut().unwrap();
        let symbolic = SymbolicSparseColMatRef::new_checked(n, n, &cache.col_ptr, None, &cache.row_idx);
        let mat = SparseColMatRef::new(symbolic, &m.values);
        let rhs = Col::<f64>::from_fn(n, |i| bf[i]);

        let attempt = |x: Col<f64>| -> Option<Vec<f64>> {
            let x: Vec<f64> = (0..n).map(|i| x[i]).collect();
            x.iter().all(|v| v.is_finite()).then_some(x)
        };

        let mut reason = String::new();
        if kff.symmetric {
            if cache.llt.is_none() {
                cache.llt = SymbolicLlt::try_new(symbolic, Side::Lower).ok();
            }
            if let Some(sym) = cache.llt.clone() {
                match Llt::try_new_with_symbolic(sym, mat, Side::Lower) {
                    Ok(llt) => {
                        if let Some(x) = attempt(llt.solve(&rhs)) {
                            let res = relative_residual(kff, &x, bf);
                            if res <= SOLVE_TOLERANCE {
                                return Ok(x);
                            }
                            reason = format!("Cholesky residual {res:e}");
                        }
                    }
                    Err(e) => reason = format!("Cholesky: {e}"),
                }
            }
        }
        let lu = SymbolicLu::try_new(symbolic)
            .map_err(|e| FemError::SolverFailure { residual: f64::INFINITY, reason: format!("{reason}; LU: {e}") })?;
        match Lu::try_new_with_symbolic(lu, mat) {
            Ok(lu) => match attempt(lu.solve(&rhs)) {
                Some(x) => {
                    let res = relative_residual(kff, &x, bf);
                    if res <= SOLVE_TOLERANCE {
                        Ok(x)
                    } else {
                        Err(FemError::SolverFailure { residual: res, reason: format!("{reason}; LU residual too large") })
                    }
                }
                None => Err(FemError::SolverFailure {
                    residual: f64::INFINITY,
                    reason: format!("{reason}; LU produced non-finite values"),
                }),
            },
            Err(e) => Err(FemError::SolverFailure { residual: f64::INFINITY, reason: format!("{reason}; LU: {e}") }),
        }
    }
}

fn relative_residual(k: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let kx = k.matvec(x);
    let r: Vec<f64> = kx.iter().zip(b).map(|(a, b)| a - b).collect();
    let nb = norm2(b);
    if nb == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / nb
    }
}

/// Jacobi-preconditioned conjugate gradients on an SPD matrix.
pub fn pcg(k: &SparseMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let mut inv_diag = vec![1.0; n];
    for (i, d) in inv_diag.iter_mut().enumerate() {
        let a = k.get(i, i);
        if a <= 0.0 || !a.is_finite() {
            return Err(FemError::SolverFailure {
                residual: 1.0,
                reason: format!("non-positive diagonal entry {a:e} at row {i}"),
            });
        }
        *d = 1.0 / a;
    }
    let nb = norm2(b);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for _ in 0..max_iter {
        if norm2(&r) <= tol * nb {
            return Ok(x);
        }
        let kp = k.matvec(&p);
        let pkp: f64 = p.iter().zip(&kp).map(|(a, b)| a * b).sum();
        if pkp <= 0.0 || !pkp.is_finite() {
            return Err(FemError::SolverFailure {
                residual: norm2(&r) / nb,
                reason: "matrix is not positive definite on the free dofs".into(),
            });
        }
        let alpha = rz / pkp;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * kp[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = norm2(&r) / nb;
    if res <= tol {
        Ok(x)
    } else {
        Err(FemError::SolverFailure { residual: res, reason: format!("PCG did not converge in {max_iter} iterations") })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let (n, m, p) = (a.len(), b.len(), b[0].len());
        let mut c = vec![vec![0.0; p]; n];
        for i in 0..n {
            for k in 0..m {
                for j in 0..p {
                    c[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        c
    }

    fn dense_t(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut t = vec![vec![0.0; a.len()]; a[0].len()];
        for (i, r) in a.iter().enumerate() {
            for (j, &x) in r.iter().enumerate() {
                t[j][i] = x;
            }
        }
        t
    }

    fn random_sparse(rng: &mut ChaCha8Rng, n: usize, m: usize, count: usize) -> (SparseMatrix, Vec<Vec<f64>>) {
        let mut dense = vec![vec![0.0; m]; n];
        let (mut r, mut c, mut v) = (vec![], vec![], vec![]);
        for _ in 0..count {
            let (i, j, x) = (rng.gen_range(0..n), rng.gen_range(0..m), rng.gen_range(-1.0..1.0));
            dense[i][j] += x;
            r.push(i);
            c.push(j);
            v.push(x);
        }
        (SparseMatrix::from_triplets(&r, &c, &v, n, m).unwrap(), dense)
    }

    fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        a.iter().flatten().zip(b.iter().flatten()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn duplicates_are_summed() {
        let a = SparseMatrix::from_triplets(&[0, 0], &[0, 0], &[2.0, 3.0], 1, 1).unwrap();
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(0, 0), 5.0);
    }

    #[test]
    fn empty_triplets_give_zero_matrix() {
        let a = SparseMatrix::from_triplets(&[], &[], &[], 3, 4).unwrap();
        assert_eq!(a.nnz(), 0);
        assert_eq!(a.to_dense(), vec![vec![0.0; 4]; 3]);
    }

    #[test]
    fn out_of_range_index_rejected() {
        assert!(matches!(SparseMatrix::from_triplets(&[3], &[0], &[1.0], 3, 3), Err(FemError::Construction(_))));
        assert!(matches!(SparseMatrix::from_triplets(&[0], &[5], &[1.0], 3, 3), Err(FemError::Construction(_))));
        assert!(SparseMatrix::from_triplets(&[0, 1], &[0], &[1.0], 3, 3).is_err());
    }

    #[test]
    fn random_triplets_match_dense_accumulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let (a, dense) = random_sparse(&mut rng, 8, 8, 40);
            assert_eq!(a.to_dense(), dense);
            for i in 0..8 {
                let (c, _) = a.row(i);
                assert!(c.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn sandwich_identity_and_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (b, bd) = random_sparse(&mut rng, 12, 5, 30);
        let k = sandwich(&b, &SparseMatrix::identity(12)).unwrap();
        assert!(k.is_symmetric());
        assert!(max_diff(&k.to_dense(), &dense_mul(&dense_t(&bd), &bd)) < 1e-14);
        assert!(k.symmetry_defect() <= 1e-10 * k.max_abs());
        let z = sandwich(&b, &SparseMatrix::from_triplets(&[], &[], &[], 12, 12).unwrap()).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sandwich_matches_dense_triple_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let (b, bd) = random_sparse(&mut rng, 15, 7, 40);
            let (d, dd) = random_sparse(&mut rng, 15, 15, 60);
            let k = sandwich(&b, &d).unwrap();
            let oracle = dense_mul(&dense_mul(&dense_t(&bd), &dd), &bd);
            let scale = oracle.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            assert!(max_diff(&k.to_dense(), &oracle) <= 1e-12 * scale);
        }
    }

    #[test]
    fn sandwich_dimension_mismatch() {
        let b = SparseMatrix::identity(3);
        assert!(matches!(sandwich(&b, &SparseMatrix::identity(4)), Err(FemError::DimensionMismatch(_))));
        assert!(sandwich(&b, &SparseMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn add_and_accumulate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (a, ad) = random_sparse(&mut rng, 6, 6, 20);
        let (b, bd) = random_sparse(&mut rng, 6, 6, 20);
        let c = a.add_scaled(2.0, &b, -1.0).unwrap();
        let mut expect = ad.clone();
        for i in 0..6 {
            for j in 0..6 {
                expect[i][j] = 2.0 * ad[i][j] - bd[i][j];
            }
        }
        assert!(max_diff(&c.to_dense(), &expect) < 1e-15);

        let mut union = a.add_scaled(1.0, &b, 0.0).unwrap();
        assert!(union.accumulate_in_pattern(&b));
        assert!(max_diff(&union.to_dense(), &a.add_scaled(1.0, &b, 1.0).unwrap().to_dense()) < 1e-15);
        let mut small = SparseMatrix::zeros(6, 6);
        assert!(b.nnz() == 0 || !small.accumulate_in_pattern(&b));
    }

    #[test]
    fn identity_solve() {
        let x = restricted_solve(&SparseMatrix::identity(3), &[1.0, 0.0, 0.0], &[true; 3]).unwrap();
        assert_eq!(x, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn decoupled_restricted_solve() {
        let mut k = SparseMatrix::from_triplets(&[0, 1], &[0, 1], &[2.0, 2.0], 2, 2).unwrap();
        k.set_symmetric(true);
        let x = restricted_solve(&k, &[2.0, 4.0], &[true, false]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && x[1] == 0.0, "{x:?}");
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> (SparseMatrix, Vec<Vec<f64>>) {
        let (_, g) = random_sparse(rng, n, n, 3 * n);
        let mut a = dense_mul(&dense_t(&g), &g);
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += 1.0;
        }
        let (mut r, mut c, mut v) = (vec![], vec![], vec![]);
        for i in 0..n {
            for j in 0..n {
                if a[i][j] != 0.0 {
                    r.push(i);
                    c.push(j);
                    v.push(a[i][j]);
                }
            }
        }
        let mut s = SparseMatrix::from_triplets(&r, &c, &v, n, n).unwrap();
        s.set_symmetric(true);
        (s, a)
    }

    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for i in col + 1..n {
                let f = a[i][col] / a[col][col];
                for j in col..n {
                    a[i][j] -= f * a[col][j];
                }
                b[i] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    #[test]
    fn random_spd_restricted_solve_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for kind in [LinearSolverKind::Direct, LinearSolverKind::Pcg] {
            for _ in 0..5 {
                let n = 20;
                let (k, kd) = random_spd(&mut rng, n);
                let mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
                let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let x = RestrictedSolver::new(&mask, kind).solve(&k, &rhs).unwrap();
                let free: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
                let sub: Vec<Vec<f64>> = free.iter().map(|&i| free.iter().map(|&j| kd[i][j]).collect()).collect();
                let xf = dense_solve(sub, free.iter().map(|&i| rhs[i]).collect());
                for (f, &g) in free.iter().enumerate() {
                    assert!((x[g] - xf[f]).abs() < 1e-9, "{kind:?}");
                }
                for i in 0..n {
                    if !mask[i] {
                        assert_eq!(x[i], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn singular_restricted_matrix_reports_failure() {
        let mut k = SparseMatrix::from_triplets(&[0, 0, 1, 1], &[0, 1, 0, 1], &[1.0, 1.0, 1.0, 1.0], 2, 2).unwrap();
        k.set_symmetric(true);
        let err = restricted_solve(&k, &[1.0, 0.0], &[true, true]).unwrap_err();
        assert!(matches!(err, FemError::SolverFailure { .. }));
    }

    #[test]
    fn energy_norm_cases() {
        let k = SparseMatrix::identity(2);
        assert_eq!(energy_norm(&k, &[0.0, 0.0]), 0.0);
        assert_eq!(energy_norm(&k, &[3.0, 4.0]), 5.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (k, kd) = random_spd(&mut rng, 10);
        let v: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut q = 0.0;
        for i in 0..10 {
            for j in 0..10 {
                q += v[i] * kd[i][j] * v[j];
            }
        }
        assert!((energy_norm(&k, &v) - q.sqrt()).abs() < 1e-12 * q.sqrt());
    }
}
