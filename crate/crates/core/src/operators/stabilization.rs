//! Residual-based VMS ingredients: stabilization parameters and strong residuals.

use nalgebra::{DVector, Vector2};

use super::{BodyForce, OperatorSet};
use crate::discretization::{pressure_at, BasisAtPoint, CellMetric, FeSystem, VelocityAtPoint};

/// `tau_M = (4/dt^2 + u.Gu + C_inv nu^2 G:G)^(-1/2)`, `tau_C = 1 / (tau_M g.g)`.
pub fn stabilization_coefficients(
    metric: &CellMetric,
    u: &Vector2<f64>,
    nu: f64,
    dt: f64,
    c_inv: f64,
) -> (f64, f64) {
    let tau_m =
        (4.0 / (dt * dt) + u.dot(&(metric.g_tensor * u)) + c_inv * nu * nu * metric.g_colon_g)
            .powf(-0.5);
    (tau_m, 1.0 / (tau_m * metric.g_dot_g))
}

/// Strong residuals at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrongResidual {
    /// Momentum residual `r_M`.
    pub momentum: Vector2<f64>,
    /// Continuity residual `r_C = div u`.
    pub continuity: f64,
}

/// Everything the VMS terms need at one quadrature point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PointState {
    pub u: VelocityAtPoint,
    pub residual: StrongResidual,
}

impl PointState {
    #[allow(clippy::too_many_arguments)]
    pub fn eval(
        basis: &BasisAtPoint,
        u_loc: &[Vector2<f64>; 6],
        u_prev_loc: &[Vector2<f64>; 6],
        p_loc: &[f64; 3],
        dt: f64,
        nu: f64,
        force: &BodyForce,
        t: f64,
    ) -> Self {
        let u = VelocityAtPoint::eval(basis, u_loc);
        let u_prev: Vector2<f64> = (0..6).map(|k| u_prev_loc[k] * basis.p2[k]).sum();
        let (_, grad_p) = pressure_at(basis, p_loc);
        let div = u.divergence();
        // div(u (x) u) = (grad u) u + u div u
        let convection = u.grad * u.value + u.value * div;
        let momentum = (u.value - u_prev) / dt + convection - u.viscous_operator() * nu + grad_p
            - force.eval(&basis.x, t);
        PointState {
            u,
            residual: StrongResidual {
                momentum,
                continuity: div,
            },
        }
    }
}

/// Per-cell, per-quadrature-point `tau_M` and `tau_C`.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilizationField {
    n_qp: usize,
    tau_m: Vec<f64>,
    tau_c: Vec<f64>,
    pub c_inv: f64,
}

impl StabilizationField {
    /// Evaluates the coefficients from the velocity field `u`.
    pub fn compute(fes: &FeSystem, u: &DVector<f64>, nu: f64, dt: f64, c_inv: f64) -> Self {
        let n_qp = fes.quadrature().len();
        let mut tau_m = Vec::with_capacity(fes.n_cells() * n_qp);
        let mut tau_c = Vec::with_capacity(fes.n_cells() * n_qp);
        for cell in 0..fes.n_cells() {
            let metric = fes.cell_metric(cell);
            let loc = fes.local_velocity(cell, u);
            for q in 0..n_qp {
                let b = fes.evaluate_basis(cell, q);
                let uq: Vector2<f64> = (0..6).map(|k| loc[k] * b.p2[k]).sum();
                let (m, c) = stabilization_coefficients(&metric, &uq, nu, dt, c_inv);
                tau_m.push(m);
                tau_c.push(c);
            }
        }
        StabilizationField {
            n_qp,
            tau_m,
            tau_c,
            c_inv,
        }
    }

    /// The same `tau_M` and `tau_C` at every point.
    pub fn uniform(fes: &FeSystem, tau_m: f64, tau_c: f64, c_inv: f64) -> Self {
        let n_qp = fes.quadrature().len();
        let n = fes.n_cells() * n_qp;
        StabilizationField {
            n_qp,
            tau_m: vec![tau_m; n],
            tau_c: vec![tau_c; n],
            c_inv,
        }
    }

    pub fn for_operators(ops: &OperatorSet, u: &DVector<f64>) -> Self {
        Self::compute(ops.fes(), u, ops.nu, ops.dt, ops.c_inv)
    }

    pub fn tau_m(&self, cell: usize, q: usize) -> f64 {
        self.tau_m[cell * self.n_qp + q]
    }

    pub fn tau_c(&self, cell: usize, q: usize) -> f64 {
        self.tau_c[cell * self.n_qp + q]
    }

    /// Copy with every `tau_M` multiplied by `factor`; `tau_C` is left unchanged.
    pub fn with_scaled_tau_m(&self, factor: f64) -> Self {
        StabilizationField {
            tau_m: self.tau_m.iter().map(|t| t * factor).collect(),
            ..self.clone()
        }
    }
}

/// Strong residuals at every quadrature point, cell-major.
#[allow(clippy::too_many_arguments)]
pub fn strong_residuals(
    fes: &FeSystem,
    u_now: &DVector<f64>,
    u_prev: &DVector<f64>,
    p_now: &DVector<f64>,
    dt: f64,
    nu: f64,
    force: &BodyForce,
    t: f64,
) -> Vec<StrongResidual> {
    let mut out = Vec::with_capacity(fes.n_cells() * fes.quadrature().len());
    for cell in 0..fes.n_cells() {
        let ul = fes.local_velocity(cell, u_now);
        let upl = fes.local_velocity(cell, u_prev);
        let pl = fes.local_pressure(cell, p_now);
        for q in 0..fes.quadrature().len() {
            let b = fes.evaluate_basis(cell, q);
            out.push(PointState::eval(&b, &ul, &upl, &pl, dt, nu, force, t).residual);
        }
    }
    out
}
