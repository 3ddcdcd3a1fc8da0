//! Galerkin projection of the full-order system onto a reduced basis and its
//! time integration.
//!
//! The consistent model lifts the reduced state, evaluates the full stabilized
//! residual and Jacobian and projects them back. The non-consistent model keeps
//! only the Galerkin terms, with convection stored as a third-order tensor.

mod io;
mod metrics;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::fom::{NewtonConfig, SnapshotSet};
use crate::operators::{assemble_convection, OperatorSet};
use crate::pod::ReducedBasis;

pub use io::{errors_vs_n_csv, errors_vs_time_csv, RomTrajectory, TRAJECTORY_MAGIC};
pub use metrics::{enstrophy, kinetic_energy, metrics, MetricsReport, SampleErrors};

#[derive(Debug, Error)]
pub enum RomError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("singular reduced system at step {step} (t = {t}): {reason}")]
    Singular { step: usize, t: f64, reason: String },
    #[error("reduced Newton did not converge at step {step} (t = {t}): residual {residual:e} after {iterations} iterations")]
    Divergence {
        step: usize,
        t: f64,
        iterations: usize,
        residual: f64,
    },
    #[error("time grids differ: {0}")]
    TimeGridMismatch(String),
}

/// Reduced coefficients; `c[0]` multiplies the lifting and is always 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RomState {
    pub c: DVector<f64>,
    pub q: DVector<f64>,
    pub t: f64,
}

/// Projected operators. Column and row 0 belong to the lifting.
pub struct ReducedModel<'a> {
    ops: &'a OperatorSet,
    basis: &'a ReducedBasis,
    pub consistent: bool,
    /// `Z^T M Z`
    pub mass: DMatrix<f64>,
    /// `Z^T A Z` (the viscous term is `2 nu` times this)
    pub diffusion: DMatrix<f64>,
    /// `Z_p^T B Z`
    pub divergence: DMatrix<f64>,
    /// `tensor[k] = Z^T C(z_k) Z`, non-consistent model only.
    pub tensor: Option<Vec<DMatrix<f64>>>,
    /// Reduced inf-sup constant of the divergence block in the `X_u`, `X_p` norms.
    pub inf_sup: f64,
    /// Block-diagonal map from free reduced unknowns to full unknowns.
    trial: DMatrix<f64>,
}

impl<'a> ReducedModel<'a> {
    pub fn project(
        ops: &'a OperatorSet,
        basis: &'a ReducedBasis,
        consistent: bool,
    ) -> Result<Self, RomError> {
        let (nv, np) = (ops.n_velocity(), ops.n_pressure());
        if basis.zu.nrows() != nv || basis.zp.nrows() != np {
            return Err(RomError::DimensionMismatch(format!(
                "basis has {} x {} rows, operators {} x {}",
                basis.zu.nrows(),
                basis.zp.nrows(),
                nv,
                np
            )));
        }
        let z = &basis.zu;
        let tensor = (!consistent).then(|| {
            (0..z.ncols())
                .map(|k| assemble_convection(ops, &z.column(k).into_owned()).project(z, z))
                .collect()
        });
        let nf = basis.n_free();
        let npr = basis.n_pressure();
        let mut trial = DMatrix::zeros(nv + np, nf + npr);
        trial
            .view_mut((0, 0), (nv, nf))
            .copy_from(&z.columns(1, nf));
        trial.view_mut((nv, nf), (np, npr)).copy_from(&basis.zp);
        let divergence = ops.divergence.project(&basis.zp, z);
        let modes = z.columns(1, nf).into_owned();
        let inf_sup = reduced_inf_sup(
            &divergence.columns(1, nf).into_owned(),
            &ops.h1_gramian.project(&modes, &modes),
            &ops.pressure_mass.project(&basis.zp, &basis.zp),
        );
        Ok(ReducedModel {
            ops,
            basis,
            consistent,
            mass: ops.mass.project(z, z),
            diffusion: ops.diffusion.project(z, z),
            divergence,
            tensor,
            inf_sup,
            trial,
        })
    }

    pub fn basis(&self) -> &ReducedBasis {
        self.basis
    }

    pub fn operators(&self) -> &OperatorSet {
        self.ops
    }

    /// Free velocity plus pressure unknowns.
    pub fn n_unknowns(&self) -> usize {
        self.trial.ncols()
    }

    /// `Z^T C(u) u` for reduced coefficients `c` via the tensor.
    pub fn tensor_convection(&self, c: &DVector<f64>) -> Option<DVector<f64>> {
        let t = self.tensor.as_ref()?;
        let mut out = DVector::zeros(c.len());
        for (k, tk) in t.iter().enumerate() {
            if c[k] != 0.0 {
                out += tk * c * c[k];
            }
        }
        Some(out)
    }

    fn split(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let nf = self.basis.n_free();
        let mut c = DVector::zeros(nf + 1);
        c[0] = 1.0;
        c.rows_mut(1, nf).copy_from(&x.rows(0, nf));
        (c, x.rows(nf, self.basis.n_pressure()).into_owned())
    }

    /// Reduced residual and Jacobian with the lifting condensed out.
    fn evaluate(
        &self,
        x: &DVector<f64>,
        c_prev: &DVector<f64>,
        t: f64,
    ) -> (DVector<f64>, DMatrix<f64>) {
        let (c, q) = self.split(x);
        if self.consistent {
            let u = &self.basis.zu * &c;
            let p = &self.basis.zp * &q;
            let u_prev = &self.basis.zu * c_prev;
            let ev = self.ops.system(&u, &p, &u_prev, t, true, true);
            let jac = ev.jacobian.expect("Jacobian requested");
            let r = self.trial.transpose() * ev.residual;
            let j = self.trial.transpose() * jac.mul_dense(&self.trial);
            return (r, j);
        }
        let ops = self.ops;
        let nf = self.basis.n_free();
        let npr = self.basis.n_pressure();
        let n = nf + npr;
        let tensor = self
            .tensor
            .as_ref()
            .expect("non-consistent model carries the tensor");
        let lin = &self.mass / ops.dt + &self.diffusion * (2.0 * ops.nu);
        let mut ru = &self.mass * (&c - c_prev) / ops.dt
            + &self.diffusion * &c * (2.0 * ops.nu)
            + self.tensor_convection(&c).expect("tensor present")
            + self.divergence.transpose() * &q;
        if !ops.force.is_zero() {
            ru -= self.basis.zu.transpose() * ops.forcing(t);
        }
        let rp = &self.divergence * &c;
        let mut r = DVector::zeros(n);
        r.rows_mut(0, nf).copy_from(&ru.rows(1, nf));
        r.rows_mut(nf, npr).copy_from(&rp);

        let mut conv = DMatrix::zeros(nf + 1, nf + 1);
        for (k, tk) in tensor.iter().enumerate() {
            conv += tk * c[k];
        }
        let mut j = DMatrix::zeros(n, n);
        for col in 0..nf {
            let dc = &tensor[col + 1] * &c;
            for row in 0..nf {
                j[(row, col)] = lin[(row + 1, col + 1)] + conv[(row + 1, col + 1)] + dc[row + 1];
            }
        }
        j.view_mut((0, nf), (nf, npr))
            .copy_from(&self.divergence.columns(1, nf).transpose());
        j.view_mut((nf, 0), (npr, nf))
            .copy_from(&self.divergence.columns(1, nf));
        (r, j)
    }
}

/// `min_q max_v (B v, q) / (|v|_{X_u} |q|_{X_p})` for reduced divergence `b`
/// (pressure rows) with Gramians `gu`, `gp`. Zero when pressure outnumbers velocity.
pub fn reduced_inf_sup(b: &DMatrix<f64>, gu: &DMatrix<f64>, gp: &DMatrix<f64>) -> f64 {
    if b.nrows() == 0 {
        return f64::INFINITY;
    }
    if b.nrows() > b.ncols() {
        return 0.0;
    }
    let (Some(lu), Some(lp)) = (gu.clone().cholesky(), gp.clone().cholesky()) else {
        return 0.0;
    };
    let lu_inv = lu
        .l()
        .try_inverse()
        .expect("triangular factor is invertible");
    let lp_inv = lp
        .l()
        .try_inverse()
        .expect("triangular factor is invertible");
    let s = lp_inv * b * lu_inv.transpose();
    s.singular_values().min()
}

/// Nonlinear solver settings for reduced steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RomConfig {
    pub newton: NewtonConfig,
    /// A Jacobian with `sigma_min <= singular_tol * sigma_max` is reported as singular.
    pub singular_tol: f64,
    /// The non-consistent model has no pressure stabilization and refuses to step
    /// when its reduced inf-sup constant is below this.
    pub inf_sup_tol: f64,
}

impl Default for RomConfig {
    fn default() -> Self {
        RomConfig {
            newton: NewtonConfig::default(),
            singular_tol: 1e-12,
            inf_sup_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RomStepReport {
    pub step: usize,
    pub t: f64,
    pub newton_iters: usize,
    pub residual: f64,
}

impl std::fmt::Display for RomStepReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "t={:.6} newton_iters={} res={:.3e}",
            self.t, self.newton_iters, self.residual
        )
    }
}

/// Advances `prev` to step index `step` (time `step * dt`) with backward Euler.
pub fn rom_step(
    model: &ReducedModel,
    prev: &RomState,
    step: usize,
    config: &RomConfig,
) -> Result<(RomState, RomStepReport), RomError> {
    let nf = model.basis.n_free();
    let t = step as f64 * model.ops.dt;
    if !model.consistent && !(model.inf_sup > config.inf_sup_tol) {
        return Err(RomError::Singular {
            step,
            t,
            reason: format!(
                "reduced inf-sup constant {:.3e} of the non-consistent model; add supremizer modes",
                model.inf_sup
            ),
        });
    }
    let mut x = DVector::zeros(model.n_unknowns());
    x.rows_mut(0, nf).copy_from(&prev.c.rows(1, nf));
    x.rows_mut(nf, prev.q.len()).copy_from(&prev.q);
    let newton = config.newton;
    let (mut r, mut j) = model.evaluate(&x, &prev.c, t);
    let mut norm = r.norm();
    let r0 = norm;
    let mut iters = 0;
    loop {
        if norm <= newton.abs_tol || (iters > 0 && norm <= newton.rel_tol * r0) {
            break;
        }
        if iters == newton.max_iter || !norm.is_finite() {
            return Err(RomError::Divergence {
                step,
                t,
                iterations: iters,
                residual: norm,
            });
        }
        let sv = j.singular_values();
        let (smin, smax) = (sv.min(), sv.max());
        if !(smin > config.singular_tol * smax) {
            return Err(RomError::Singular {
                step,
                t,
                reason: format!(
                    "reduced Jacobian has condition number {:.3e} (sigma_min {smin:.3e}, sigma_max {smax:.3e})",
                    smax / smin
                ),
            });
        }
        let delta = j
            .clone()
            .lu()
            .solve(&(-&r))
            .ok_or_else(|| RomError::Singular {
                step,
                t,
                reason: "zero pivot in reduced LU".into(),
            })?;
        let mut alpha = 1.0;
        let mut halvings = 0;
        loop {
            let trial = &x + &delta * alpha;
            let (rt, jt) = model.evaluate(&trial, &prev.c, t);
            let nt = rt.norm();
            if nt < norm || halvings == newton.max_halvings {
                x = trial;
                r = rt;
                j = jt;
                norm = nt;
                break;
            }
            alpha *= 0.5;
            halvings += 1;
        }
        iters += 1;
    }
    let (c, q) = model.split(&x);
    Ok((
        RomState { c, q, t },
        RomStepReport {
            step,
            t,
            newton_iters: iters,
            residual: norm,
        },
    ))
}

/// Runs `n_steps` steps from `init` at step index `start`, keeping `init` and every
/// `stride`-th state after it.
pub fn rom_run(
    model: &ReducedModel,
    init: &RomState,
    start: usize,
    n_steps: usize,
    stride: usize,
    config: &RomConfig,
    observer: &mut dyn FnMut(&RomStepReport),
) -> Result<Vec<RomState>, RomError> {
    let mut out = vec![init.clone()];
    let mut state = init.clone();
    for k in 1..=n_steps {
        let (next, report) = rom_step(model, &state, start + k, config)?;
        log::info!("{report}");
        observer(&report);
        if k % stride.max(1) == 0 {
            out.push(next.clone());
        }
        state = next;
    }
    Ok(out)
}

/// `X_u` projection of `u0 - lifting` onto the velocity columns and `X_p`
/// projection of `p0` onto the pressure modes.
pub fn rom_initial_state(
    ops: &OperatorSet,
    basis: &ReducedBasis,
    u0: &DVector<f64>,
    p0: &DVector<f64>,
    t: f64,
) -> RomState {
    let nf = basis.n_free();
    let modes = basis.zu.columns(1, nf).into_owned();
    let gu = ops.h1_gramian.project(&modes, &modes);
    let bu = modes.transpose() * ops.h1_gramian.mul_vec(&(u0 - &basis.lifting));
    let cf = solve_gram(gu, bu);
    let gp = ops.pressure_mass.project(&basis.zp, &basis.zp);
    let q = solve_gram(gp, basis.zp.transpose() * ops.pressure_mass.mul_vec(p0));
    let mut c = DVector::zeros(nf + 1);
    c[0] = 1.0;
    c.rows_mut(1, nf).copy_from(&cf);
    RomState { c, q, t }
}

fn solve_gram(g: DMatrix<f64>, b: DVector<f64>) -> DVector<f64> {
    if g.nrows() == 0 {
        return b;
    }
    match g.clone().cholesky() {
        Some(ch) => ch.solve(&b),
        None => g.lu().solve(&b).unwrap_or_else(|| DVector::zeros(b.len())),
    }
}

/// Reduced initial state projected from the first snapshot of `snapshots`.
pub fn initial_state_from(
    ops: &OperatorSet,
    basis: &ReducedBasis,
    snapshots: &SnapshotSet,
) -> Option<RomState> {
    let s = snapshots.states.first()?;
    Some(rom_initial_state(ops, basis, &s.u, &s.p, s.t))
}

/// `max |supremizer coefficient| / max |velocity-mode coefficient|` over a trajectory.
pub fn supremizer_dormancy(basis: &ReducedBasis, states: &[RomState]) -> Option<f64> {
    if basis.n_supremizer == 0 {
        return None;
    }
    let (nu, ns) = (basis.n_velocity, basis.n_supremizer);
    let mut vel: f64 = 0.0;
    let mut sup: f64 = 0.0;
    for s in states {
        vel = vel.max(s.c.rows(1, nu).amax());
        sup = sup.max(s.c.rows(1 + nu, ns).amax());
    }
    Some(sup / vel)
}
