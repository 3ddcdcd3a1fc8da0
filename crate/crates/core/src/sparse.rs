//! Compressed-row matrices with a fixed sparsity pattern and a direct solver.
//!
//! Finite element operators are reassembled many times into the same pattern,
//! so the pattern is built once from cell connectivity and values are
//! accumulated in place.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::MatMut;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinearSolveError {
    #[error("symbolic factorization failed: {0}")]
    Symbolic(String),
    #[error("matrix is singular: {0}")]
    Singular(String),
}

/// Restricts the sparse factorizations to the calling thread.
pub fn set_serial_factorization() {
    faer::set_global_parallelism(faer::Par::Seq);
}

/// Row-major sparse matrix. Column indices are sorted within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Arc<Vec<usize>>,
    col_idx: Arc<Vec<usize>>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix whose pattern couples every row in a block with every column in the
    /// matching block, block by block.
    pub fn from_blocks<'a, R, C>(
        nrows: usize,
        ncols: usize,
        blocks: impl Iterator<Item = (R, C)>,
    ) -> Self
    where
        R: AsRef<[usize]> + 'a,
        C: AsRef<[usize]> + 'a,
    {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); nrows];
        for (r, c) in blocks {
            for &i in r.as_ref() {
                rows[i].extend_from_slice(c.as_ref());
            }
        }
        Self::from_rows(nrows, ncols, rows)
    }

    fn from_rows(nrows: usize, ncols: usize, mut rows: Vec<Vec<usize>>) -> Self {
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for r in &mut rows {
            r.sort_unstable();
            r.dedup();
            debug_assert!(r.last().map_or(true, |&c| c < ncols));
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        CsrMatrix {
            nrows,
            ncols,
            row_ptr: Arc::new(row_ptr),
            col_idx: Arc::new(col_idx),
            values: vec![0.0; nnz],
        }
    }

    /// Sparse identity.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::from_rows(n, n, (0..n).map(|i| vec![i]).collect());
        m.values.fill(1.0);
        m
    }

    /// A zero matrix sharing this pattern.
    pub fn zeros_like(&self) -> Self {
        CsrMatrix {
            values: vec![0.0; self.values.len()],
            ..self.clone()
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn same_pattern(&self, other: &CsrMatrix) -> bool {
        Arc::ptr_eq(&self.row_ptr, &other.row_ptr) && Arc::ptr_eq(&self.col_idx, &other.col_idx)
            || (self.row_ptr == other.row_ptr && self.col_idx == other.col_idx)
    }

    /// Storage index of entry `(i, j)`, if it is in the pattern.
    pub fn index_of(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        let cols = &self.col_idx[start..self.row_ptr[i + 1]];
        cols.binary_search(&j).ok().map(|k| start + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.index_of(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Adds to entry `(i, j)`; panics if the entry is outside the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .index_of(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) is not in the sparsity pattern"));
        self.values[k] += v;
    }

    /// Adds a dense local block at the given global rows and columns.
    pub fn add_block(&mut self, rows: &[usize], cols: &[usize], block: &[f64]) {
        debug_assert_eq!(block.len(), rows.len() * cols.len());
        for (a, &i) in rows.iter().enumerate() {
            let start = self.row_ptr[i];
            let row_cols = &self.col_idx[start..self.row_ptr[i + 1]];
            for (b, &j) in cols.iter().enumerate() {
                let k = start
                    + row_cols.binary_search(&j).unwrap_or_else(|_| {
                        panic!("entry ({i}, {j}) is not in the sparsity pattern")
                    });
                self.values[k] += block[a * cols.len() + b];
            }
        }
    }

    pub fn fill_zero(&mut self) {
        self.values.fill(0.0);
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// `self += s * other`; both must share a pattern.
    pub fn axpy(&mut self, s: f64, other: &CsrMatrix) {
        assert!(self.same_pattern(other), "axpy requires identical patterns");
        self.values
            .iter_mut()
            .zip(&other.values)
            .for_each(|(a, b)| *a += s * b);
    }

    /// Clears row `i` and puts `diag` on its diagonal.
    pub fn set_row_to_identity(&mut self, i: usize, diag: f64) {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        for k in s..e {
            self.values[k] = if self.col_idx[k] == i { diag } else { 0.0 };
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.ncols);
        DVector::from_iterator(
            self.nrows,
            (0..self.nrows).map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, a)| a * x[j]).sum::<f64>()
            }),
        )
    }

    pub fn transpose_mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = DVector::zeros(self.ncols);
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, a) in c.iter().zip(v) {
                y[j] += a * x[i];
            }
        }
        y
    }

    /// `x^T A y`
    pub fn bilinear(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        (0..self.nrows)
            .map(|i| {
                let (c, v) = self.row(i);
                x[i] * c.iter().zip(v).map(|(&j, a)| a * y[j]).sum::<f64>()
            })
            .sum()
    }

    /// `A Z` for a dense `Z`.
    pub fn mul_dense(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(z.nrows(), self.ncols);
        let mut out = DMatrix::zeros(self.nrows, z.ncols());
        for col in 0..z.ncols() {
            let zc = z.column(col);
            for i in 0..self.nrows {
                let (c, v) = self.row(i);
                out[(i, col)] = c.iter().zip(v).map(|(&j, a)| a * zc[j]).sum();
            }
        }
        out
    }

    /// `W^T A Z` for dense `W` and `Z`.
    pub fn project(&self, w: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
        w.transpose() * self.mul_dense(z)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, a) in c.iter().zip(v) {
                d[(i, j)] += a;
            }
        }
        d
    }

    /// Largest absolute entry of `A - A^T`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, a) in c.iter().zip(v) {
                worst = worst.max((a - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Below this dimension systems are factored densely.
pub const DENSE_LIMIT: usize = 500;

/// LU factorization with partial pivoting for a fixed square pattern.
///
/// The symbolic analysis (fill-reducing ordering) is computed once; every
/// [`LuSolver::factor`] call only redoes the numeric phase. Systems smaller than
/// [`DENSE_LIMIT`] use a dense factorization instead.
#[derive(Debug, Clone)]
pub struct LuSolver {
    n: usize,
    sparse: Option<SparseSymbolic>,
}

#[derive(Debug, Clone)]
struct SparseSymbolic {
    symbolic_mat: SymbolicSparseColMat<usize>,
    symbolic: SymbolicLu<usize>,
    /// Position in the column-major value array of each row-major entry.
    csr_to_csc: Vec<usize>,
}

impl LuSolver {
    pub fn new(pattern: &CsrMatrix) -> Result<Self, LinearSolveError> {
        let n = pattern.nrows;
        assert_eq!(n, pattern.ncols, "LU requires a square matrix");
        if n < DENSE_LIMIT {
            return Ok(LuSolver { n, sparse: None });
        }
        let mut counts = vec![0usize; n + 1];
        for &j in pattern.col_idx.iter() {
            counts[j + 1] += 1;
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let col_ptr = counts.clone();
        let mut next = counts;
        let mut row_idx = vec![0usize; pattern.nnz()];
        let mut csr_to_csc = vec![0usize; pattern.nnz()];
        for i in 0..n {
            for k in pattern.row_ptr[i]..pattern.row_ptr[i + 1] {
                let j = pattern.col_idx[k];
                let dst = next[j];
                next[j] += 1;
                row_idx[dst] = i;
                csr_to_csc[k] = dst;
            }
        }
        let symbolic_mat = SymbolicSparseColMat::new_checked(n, n, col_ptr, None, row_idx);
        let symbolic = SymbolicLu::try_new(symbolic_mat.as_ref())
            .map_err(|e| LinearSolveError::Symbolic(format!("{e:?}")))?;
        Ok(LuSolver {
            n,
            sparse: Some(SparseSymbolic {
                symbolic_mat,
                symbolic,
                csr_to_csc,
            }),
        })
    }

    pub fn factor(&self, a: &CsrMatrix) -> Result<LuFactor, LinearSolveError> {
        assert_eq!(a.nrows, self.n);
        let Some(sp) = &self.sparse else {
            let lu = a.to_dense().lu();
            let u = lu.u();
            let scale = u.diagonal().amax();
            if u.diagonal()
                .iter()
                .any(|d| d.abs() <= f64::EPSILON * scale * self.n as f64)
                || scale == 0.0
            {
                return Err(LinearSolveError::Singular("zero pivot in dense LU".into()));
            }
            return Ok(LuFactor {
                n: self.n,
                inner: FactorKind::Dense(lu),
            });
        };
        assert_eq!(
            a.nnz(),
            sp.csr_to_csc.len(),
            "matrix does not match the analysed pattern"
        );
        let mut values = vec![0.0; a.nnz()];
        for (k, &dst) in sp.csr_to_csc.iter().enumerate() {
            values[dst] = a.values[k];
        }
        let mat = SparseColMatRef::new(sp.symbolic_mat.as_ref(), &values);
        let lu = Lu::try_new_with_symbolic(sp.symbolic.clone(), mat)
            .map_err(|e| LinearSolveError::Singular(format!("{e:?}")))?;
        Ok(LuFactor {
            n: self.n,
            inner: FactorKind::Sparse(lu),
        })
    }
}

#[derive(Debug)]
enum FactorKind {
    Sparse(Lu<usize, f64>),
    Dense(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

#[derive(Debug)]
pub struct LuFactor {
    n: usize,
    inner: FactorKind,
}

impl LuFactor {
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>, LinearSolveError> {
        assert_eq!(b.len(), self.n);
        let x = match &self.inner {
            FactorKind::Sparse(lu) => {
                let mut x = b.clone();
                lu.solve_in_place(MatMut::from_column_major_slice_mut(
                    x.as_mut_slice(),
                    self.n,
                    1,
                ));
                x
            }
            FactorKind::Dense(lu) => lu
                .solve(b)
                .ok_or_else(|| LinearSolveError::Singular("dense LU solve failed".into()))?,
        };
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(LinearSolveError::Singular(
                "non-finite solution from LU solve".into(),
            ))
        }
    }
}

/// One-shot sparse solve.
pub fn solve(a: &CsrMatrix, b: &DVector<f64>) -> Result<DVector<f64>, LinearSolveError> {
    LuSolver::new(a)?.factor(a)?.solve(b)
}
