//! Snapshot correlation, POD modes, supremizer enrichment and reduced bases.

mod io;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use thiserror::Error;

use crate::fom::SnapshotSet;
use crate::operators::OperatorSet;
use crate::sparse::{CsrMatrix, LinearSolveError, LuFactor, LuSolver};

pub use io::{eigen_csv, BASIS_MAGIC};

/// Eigenvalues below `DEFAULT_RANK_TOL * lambda_1` count as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PodError {
    #[error("need at least 2 snapshots, got {0}")]
    TooFewSnapshots(usize),
    #[error("snapshot {index} has length {found}, expected {expected}")]
    InconsistentLengths {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("{kind} POD: requested {requested} modes but the numerical rank is {rank}")]
    RankDeficient {
        kind: CorrelationKind,
        requested: usize,
        rank: usize,
    },
    #[error("supremizer solve failed: {0}")]
    LinearSolve(#[from] LinearSolveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelationKind {
    /// Velocity snapshots minus their mean, `X_u` inner product.
    VelocityFluctuation,
    /// Pressure snapshots, `X_p` inner product.
    Pressure,
    /// Supremizers of the pressure snapshots, `X_u` inner product.
    Supremizer,
}

impl std::fmt::Display for CorrelationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CorrelationKind::VelocityFluctuation => "velocity",
            CorrelationKind::Pressure => "pressure",
            CorrelationKind::Supremizer => "supremizer",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub entries: DMatrix<f64>,
    pub kind: CorrelationKind,
}

/// Column matrix of the snapshots, with the mean removed for velocity fluctuations.
pub fn snapshot_matrix(
    snapshots: &[DVector<f64>],
    kind: CorrelationKind,
) -> Result<DMatrix<f64>, PodError> {
    if snapshots.len() < 2 {
        return Err(PodError::TooFewSnapshots(snapshots.len()));
    }
    let n = snapshots[0].len();
    if let Some((index, s)) = snapshots.iter().enumerate().find(|(_, s)| s.len() != n) {
        return Err(PodError::InconsistentLengths {
            index,
            expected: n,
            found: s.len(),
        });
    }
    let mut s = DMatrix::from_columns(snapshots);
    if kind == CorrelationKind::VelocityFluctuation {
        let mean = s.column_mean();
        for mut c in s.column_iter_mut() {
            c -= &mean;
        }
    }
    Ok(s)
}

/// `Sigma_ij = (s_i, s_j)_X` over the (fluctuation) snapshots.
pub fn correlation(
    snapshots: &[DVector<f64>],
    kind: CorrelationKind,
    gramian: &CsrMatrix,
) -> Result<CorrelationMatrix, PodError> {
    let s = snapshot_matrix(snapshots, kind)?;
    let c = s.transpose() * gramian.mul_dense(&s);
    Ok(CorrelationMatrix {
        entries: (&c + c.transpose()) * 0.5,
        kind,
    })
}

/// Leading POD modes and the full descending eigenvalue list.
#[derive(Debug, Clone, PartialEq)]
pub struct PodModes {
    /// One mode per column, `X`-orthonormal.
    pub modes: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    /// Number of eigenvalues above `tol * lambda_1`.
    pub rank: usize,
}

/// Eigenpairs of a symmetric matrix sorted by decreasing eigenvalue.
fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i))
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

/// Flips `v` so that its entry of largest magnitude is positive.
pub fn fix_sign(v: &mut DVector<f64>) {
    let k = v.iamax();
    if v[k] < 0.0 {
        v.neg_mut();
    }
}

/// Modified Gram-Schmidt in the `X` inner product, applied twice.
fn orthonormalize(modes: &mut DMatrix<f64>, gramian: &CsrMatrix) {
    for _ in 0..2 {
        for n in 0..modes.ncols() {
            let mut v = modes.column(n).into_owned();
            for m in 0..n {
                let w = modes.column(m).into_owned();
                let c = gramian.bilinear(&w, &v);
                v.axpy(-c, &w, 1.0);
            }
            let norm = gramian.bilinear(&v, &v).sqrt();
            modes.set_column(n, &(v / norm));
        }
    }
}

/// First `n` modes `phi_k = sum_i v_ik s_i / sqrt(lambda_k)` of the snapshots behind `corr`.
pub fn pod_modes(
    corr: &CorrelationMatrix,
    snapshots: &[DVector<f64>],
    gramian: &CsrMatrix,
    n: usize,
    tol: f64,
) -> Result<PodModes, PodError> {
    let (eigenvalues, vectors) = sorted_eigen(&corr.entries);
    let top = eigenvalues.first().copied().unwrap_or(0.0);
    let rank = if top > 0.0 {
        eigenvalues.iter().take_while(|&&l| l > tol * top).count()
    } else {
        0
    };
    if n > rank {
        return Err(PodError::RankDeficient {
            kind: corr.kind,
            requested: n,
            rank,
        });
    }
    let s = snapshot_matrix(snapshots, corr.kind)?;
    let mut modes = &s * vectors.columns(0, n);
    for k in 0..n {
        let mut col = modes.column(k) / eigenvalues[k].sqrt();
        fix_sign(&mut col);
        modes.set_column(k, &col);
    }
    orthonormalize(&mut modes, gramian);
    Ok(PodModes {
        modes,
        eigenvalues,
        rank,
    })
}

/// Solver for `(grad s, grad v) = (grad p, v)` with `s = 0` on Dirichlet nodes.
pub struct SupremizerSolver<'a> {
    ops: &'a OperatorSet,
    factor: LuFactor,
    dirichlet: Vec<usize>,
}

impl<'a> SupremizerSolver<'a> {
    pub fn new(ops: &'a OperatorSet) -> Result<Self, PodError> {
        let dirichlet = ops.fes().dirichlet_dofs();
        let mut x = ops.h1_gramian.clone();
        for &d in &dirichlet {
            x.set_row_to_identity(d, 1.0);
        }
        let factor = LuSolver::new(&x)?.factor(&x)?;
        Ok(SupremizerSolver {
            ops,
            factor,
            dirichlet,
        })
    }

    pub fn solve(&self, p: &DVector<f64>) -> Result<DVector<f64>, PodError> {
        let mut rhs = self.ops.pressure_gradient.mul_vec(p);
        for &d in &self.dirichlet {
            rhs[d] = 0.0;
        }
        let mut s = self.factor.solve(&rhs)?;
        for &d in &self.dirichlet {
            s[d] = 0.0;
        }
        Ok(s)
    }
}

/// Supremizer of a single pressure field.
pub fn supremizer_solve(ops: &OperatorSet, p: &DVector<f64>) -> Result<DVector<f64>, PodError> {
    SupremizerSolver::new(ops)?.solve(p)
}

/// Lifting, mode matrices and eigenvalue spectra of a reduced space.
///
/// `zu` has the columns `[lifting | velocity modes | supremizer modes]`; the
/// lifting enters every reduced velocity with coefficient one.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBasis {
    pub mesh_checksum: u64,
    pub lifting: DVector<f64>,
    pub zu: DMatrix<f64>,
    pub zp: DMatrix<f64>,
    pub n_velocity: usize,
    pub n_supremizer: usize,
    pub lambda_u: Vec<f64>,
    pub lambda_s: Vec<f64>,
    pub lambda_p: Vec<f64>,
}

impl ReducedBasis {
    pub fn n_pressure(&self) -> usize {
        self.zp.ncols()
    }

    pub fn with_supremizers(&self) -> bool {
        self.n_supremizer > 0
    }

    /// Velocity columns without the lifting.
    pub fn n_free(&self) -> usize {
        self.zu.ncols() - 1
    }

    /// Velocity field for free coefficients `c` (lifting coefficient fixed to 1).
    pub fn velocity(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.lifting + self.zu.columns(1, self.n_free()) * c
    }

    pub fn pressure(&self, q: &DVector<f64>) -> DVector<f64> {
        &self.zp * q
    }

    /// Every free velocity dof and every pressure dof as its own mode, with `lifting`
    /// carrying the Dirichlet data.
    pub fn identity(ops: &OperatorSet, lifting: DVector<f64>) -> Self {
        let free = ops.fes().free_velocity_dofs();
        let nv = ops.n_velocity();
        let mut zu = DMatrix::zeros(nv, free.len() + 1);
        zu.set_column(0, &lifting);
        for (k, &d) in free.iter().enumerate() {
            zu[(d, k + 1)] = 1.0;
        }
        ReducedBasis {
            mesh_checksum: ops.fes().mesh().checksum(),
            lifting,
            zu,
            zp: DMatrix::identity(ops.n_pressure(), ops.n_pressure()),
            n_velocity: free.len(),
            n_supremizer: 0,
            lambda_u: Vec::new(),
            lambda_s: Vec::new(),
            lambda_p: Vec::new(),
        }
    }
}

/// Mean lifting, `n` velocity and `n` pressure modes, and optionally `n` compressed
/// supremizer modes built from the pressure snapshots.
pub fn build_basis(
    snapshots: &SnapshotSet,
    ops: &OperatorSet,
    n: usize,
    with_supremizers: bool,
    tol: f64,
) -> Result<ReducedBasis, PodError> {
    let us: Vec<DVector<f64>> = snapshots.states.iter().map(|s| s.u.clone()).collect();
    let ps: Vec<DVector<f64>> = snapshots.states.iter().map(|s| s.p.clone()).collect();
    let cu = correlation(&us, CorrelationKind::VelocityFluctuation, &ops.h1_gramian)?;
    let lifting = us.iter().sum::<DVector<f64>>() / us.len() as f64;
    let vel = pod_modes(&cu, &us, &ops.h1_gramian, n, tol)?;
    let cp = correlation(&ps, CorrelationKind::Pressure, &ops.pressure_mass)?;
    let pre = pod_modes(&cp, &ps, &ops.pressure_mass, n, tol)?;

    let sup = if with_supremizers {
        let solver = SupremizerSolver::new(ops)?;
        let ss = ps
            .par_iter()
            .map(|p| solver.solve(p))
            .collect::<Result<Vec<_>, _>>()?;
        let cs = correlation(&ss, CorrelationKind::Supremizer, &ops.h1_gramian)?;
        Some(pod_modes(&cs, &ss, &ops.h1_gramian, n, tol)?)
    } else {
        None
    };

    let n_sup = sup.as_ref().map_or(0, |s| s.modes.ncols());
    let mut zu = DMatrix::zeros(lifting.len(), 1 + n + n_sup);
    zu.set_column(0, &lifting);
    zu.columns_mut(1, n).copy_from(&vel.modes);
    if let Some(s) = &sup {
        zu.columns_mut(1 + n, n_sup).copy_from(&s.modes);
    }
    Ok(ReducedBasis {
        mesh_checksum: snapshots.mesh_checksum,
        lifting,
        zu,
        zp: pre.modes,
        n_velocity: n,
        n_supremizer: n_sup,
        lambda_u: vel.eigenvalues,
        lambda_s: sup.map_or_else(Vec::new, |s| s.eigenvalues),
        lambda_p: pre.eigenvalues,
    })
}
