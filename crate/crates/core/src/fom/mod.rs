//! Backward Euler time stepping of the stabilized system with a damped Newton
//! solve per step.

mod boundary;
mod io;

use nalgebra::DVector;
use thiserror::Error;

use crate::operators::OperatorSet;
use crate::sparse::{CsrMatrix, LinearSolveError, LuSolver};

pub use boundary::{dirichlet_vector, BoundaryData, FnBoundary, NoSlip, ParabolicInlet};
pub use io::{read_file, write_file, FileError, LeReader, LeWriter, SNAPSHOT_MAGIC};

#[derive(Debug, Error)]
pub enum FomError {
    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("Newton did not converge at step {step} (t = {t}): residual {residual:e} after {iterations} iterations")]
    Divergence {
        step: usize,
        t: f64,
        iterations: usize,
        residual: f64,
    },
    #[error("linear solve failed at step {step} (t = {t}): {source}")]
    LinearSolve {
        step: usize,
        t: f64,
        #[source]
        source: LinearSolveError,
    },
}

/// Velocity and kinematic pressure at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FomState {
    pub u: DVector<f64>,
    pub p: DVector<f64>,
    pub t: f64,
}

/// Sampled trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub mesh_checksum: u64,
    /// Time between consecutive snapshots, `dt * stride`.
    pub sample_interval: f64,
    pub states: Vec<FomState>,
}

impl SnapshotSet {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Maximum number of step halvings in the line search.
    pub max_halvings: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            abs_tol: 1e-8,
            rel_tol: 1e-6,
            max_iter: 25,
            max_halvings: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_final: f64,
    pub stride: usize,
    pub vms_enabled: bool,
    /// Dirichlet data grows linearly from zero over this many steps.
    pub ramp_steps: usize,
    /// Steps before this index are not recorded.
    pub record_from: usize,
    pub newton: NewtonConfig,
}

impl SolverConfig {
    pub fn new(dt: f64, t_final: f64, stride: usize) -> Self {
        SolverConfig {
            dt,
            t_final,
            stride,
            vms_enabled: true,
            ramp_steps: 10,
            record_from: 0,
            newton: NewtonConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), FomError> {
        let bad = |m: &str| Err(FomError::InvalidConfig(m.into()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.t_final >= self.dt * (1.0 - 1e-12)) {
            return bad("final time must be at least one time step");
        }
        if self.stride == 0 {
            return bad("snapshot stride must be at least 1");
        }
        let n = self.newton;
        if !(n.abs_tol > 0.0 && n.rel_tol > 0.0) || n.max_iter == 0 {
            return bad("Newton tolerances and iteration limit must be positive");
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn ramp(&self, step: usize) -> f64 {
        if self.ramp_steps == 0 {
            1.0
        } else {
            (step as f64 / self.ramp_steps as f64).min(1.0)
        }
    }
}

/// Outcome of one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub t: f64,
    pub newton_iters: usize,
    pub residual: f64,
}

impl std::fmt::Display for StepReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "t={:.6} newton_iters={} res={:.3e}",
            self.t, self.newton_iters, self.residual
        )
    }
}

/// Time stepper bound to one operator set and one set of boundary data.
pub struct FomSolver<'a> {
    ops: &'a OperatorSet,
    boundary: &'a dyn BoundaryData,
    config: SolverConfig,
    lu: LuSolver,
    dirichlet: Vec<usize>,
    pressure_pin: Option<usize>,
}

impl<'a> FomSolver<'a> {
    pub fn new(
        ops: &'a OperatorSet,
        boundary: &'a dyn BoundaryData,
        config: SolverConfig,
    ) -> Result<Self, FomError> {
        config.validate()?;
        if (config.dt - ops.dt).abs() > 1e-14 * ops.dt {
            return Err(FomError::InvalidConfig(format!(
                "solver dt {} differs from operator dt {}",
                config.dt, ops.dt
            )));
        }
        let fes = ops.fes();
        let lu = LuSolver::new(ops.saddle_pattern()).map_err(|source| FomError::LinearSolve {
            step: 0,
            t: 0.0,
            source,
        })?;
        // Without an outflow boundary the pressure is only defined up to a constant.
        let pressure_pin = (!fes
            .mesh()
            .has_tag(crate::discretization::BoundaryTag::Outlet))
        .then_some(fes.n_velocity());
        Ok(FomSolver {
            ops,
            boundary,
            config,
            lu,
            dirichlet: fes.dirichlet_dofs(),
            pressure_pin,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn operators(&self) -> &OperatorSet {
        self.ops
    }

    /// Index of the pressure unknown fixed to zero in the stacked vector, if any.
    pub fn pressure_pin(&self) -> Option<usize> {
        self.pressure_pin
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.config.dt
    }

    /// Dirichlet data at step `step`, including the start-up ramp.
    pub fn boundary_values(&self, step: usize) -> DVector<f64> {
        dirichlet_vector(
            self.ops.fes(),
            self.boundary,
            self.time(step),
            self.config.ramp(step),
        )
    }

    /// Rest state carrying the (ramped) boundary data at `t = 0`.
    pub fn initial_state(&self) -> FomState {
        FomState {
            u: self.boundary_values(0),
            p: DVector::zeros(self.ops.n_pressure()),
            t: 0.0,
        }
    }

    fn evaluate(
        &self,
        x: &DVector<f64>,
        u_prev: &DVector<f64>,
        t: f64,
        jacobian: bool,
    ) -> (DVector<f64>, Option<CsrMatrix>) {
        let nv = self.ops.n_velocity();
        let np = self.ops.n_pressure();
        let u = x.rows(0, nv).into_owned();
        let p = x.rows(nv, np).into_owned();
        let mut eval = self
            .ops
            .system(&u, &p, u_prev, t, self.config.vms_enabled, jacobian);
        for &d in self.dirichlet.iter().chain(self.pressure_pin.iter()) {
            eval.residual[d] = 0.0;
            if let Some(j) = eval.jacobian.as_mut() {
                j.set_row_to_identity(d, 1.0);
            }
        }
        (eval.residual, eval.jacobian)
    }

    /// Advances `prev` to step index `step`.
    pub fn step(&self, prev: &FomState, step: usize) -> Result<(FomState, StepReport), FomError> {
        let nv = self.ops.n_velocity();
        let np = self.ops.n_pressure();
        let t = self.time(step);
        let g = self.boundary_values(step);
        let mut x = DVector::zeros(nv + np);
        x.rows_mut(0, nv).copy_from(&prev.u);
        x.rows_mut(nv, np).copy_from(&prev.p);
        for &d in &self.dirichlet {
            x[d] = g[d];
        }
        let newton = self.config.newton;
        let (mut r, mut jac) = self.evaluate(&x, &prev.u, t, true);
        let mut norm = r.norm();
        let r0 = norm;
        let mut iters = 0;
        loop {
            if norm <= newton.abs_tol || (iters > 0 && norm <= newton.rel_tol * r0) {
                break;
            }
            if iters == newton.max_iter || !norm.is_finite() {
                return Err(FomError::Divergence {
                    step,
                    t,
                    iterations: iters,
                    residual: norm,
                });
            }
            let j = jac
                .take()
                .expect("Jacobian is assembled with every accepted iterate");
            let mut delta = self
                .lu
                .factor(&j)
                .and_then(|f| f.solve(&(-&r)))
                .map_err(|source| FomError::LinearSolve { step, t, source })?;
            for &d in self.dirichlet.iter().chain(self.pressure_pin.iter()) {
                delta[d] = 0.0;
            }
            let mut alpha = 1.0;
            let mut halvings = 0;
            loop {
                let trial = &x + &delta * alpha;
                let (rt, jt) = self.evaluate(&trial, &prev.u, t, true);
                let nt = rt.norm();
                if nt < norm || halvings == newton.max_halvings {
                    x = trial;
                    r = rt;
                    jac = jt;
                    norm = nt;
                    break;
                }
                alpha *= 0.5;
                halvings += 1;
            }
            iters += 1;
            log::debug!("step {step} iteration {iters}: residual {norm:e}, damping {alpha}");
        }
        let state = FomState {
            u: x.rows(0, nv).into_owned(),
            p: x.rows(nv, np).into_owned(),
            t,
        };
        Ok((
            state,
            StepReport {
                step,
                t,
                newton_iters: iters,
                residual: norm,
            },
        ))
    }

    /// Steps from `init` (taken to be the state at step index `start`) to the final
    /// time, recording every `stride`-th state.
    pub fn run_from(
        &self,
        init: &FomState,
        start: usize,
        observer: &mut dyn FnMut(&StepReport),
    ) -> Result<SnapshotSet, FomError> {
        let mut states = Vec::new();
        let mut state = init.clone();
        for n in start + 1..=self.config.n_steps() {
            let (next, report) = self.step(&state, n)?;
            log::info!("{report}");
            observer(&report);
            if n % self.config.stride == 0 && n >= self.config.record_from {
                states.push(next.clone());
            }
            state = next;
        }
        Ok(SnapshotSet {
            mesh_checksum: self.ops.fes().mesh().checksum(),
            sample_interval: self.config.dt * self.config.stride as f64,
            states,
        })
    }

    /// Full run from the rest state.
    pub fn run(&self, observer: &mut dyn FnMut(&StepReport)) -> Result<SnapshotSet, FomError> {
        self.run_from(&self.initial_state(), 0, observer)
    }
}
