//! Reference problems with known solutions for checking the discretization.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2, Point2, Vector2};

use crate::discretization::{build_rectangle_mesh, BoundaryTag, FeSystem, VelocityAtPoint};
use crate::fom::{FnBoundary, FomError, FomSolver, FomState, SolverConfig};
use crate::operators::{BodyForce, OperatorSet, Parameters, DEFAULT_C_INV};

/// Errors measured on a sequence of resolutions.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    /// Mesh size or time step per level, decreasing.
    pub steps: Vec<f64>,
    pub errors: Vec<f64>,
}

impl ConvergenceStudy {
    /// Observed orders between consecutive levels.
    pub fn orders(&self) -> Vec<f64> {
        self.steps
            .windows(2)
            .zip(self.errors.windows(2))
            .map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
            .collect()
    }

    pub fn min_order(&self) -> f64 {
        self.orders().into_iter().fold(f64::INFINITY, f64::min)
    }
}

fn params(nu: f64, dt: f64, force: BodyForce) -> Parameters {
    Parameters {
        nu,
        dt,
        c_inv: DEFAULT_C_INV,
        force,
    }
}

/// Unit square with every boundary edge Dirichlet.
fn closed_unit_square(n: usize) -> Arc<FeSystem> {
    let mesh = build_rectangle_mesh(1.0, 1.0, n, n)
        .expect("valid rectangle")
        .retag(|_, _| Some(BoundaryTag::Wall));
    Arc::new(FeSystem::new(mesh))
}

/// `|u_h - u|_{H1}` with the exact gradient evaluated at quadrature points.
pub fn h1_seminorm_error(
    fes: &FeSystem,
    u_h: &DVector<f64>,
    grad: impl Fn(&Point2<f64>) -> Matrix2<f64>,
) -> f64 {
    let mut sum = 0.0;
    for cell in 0..fes.n_cells() {
        let local = fes.local_velocity(cell, u_h);
        for q in 0..fes.quadrature().len() {
            let b = fes.evaluate_basis(cell, q);
            let v = VelocityAtPoint::eval(&b, &local);
            sum += b.jxw * (v.grad - grad(&b.x)).norm_squared();
        }
    }
    sum.sqrt()
}

/// Steady flow driven by a manufactured force with stream function
/// `sin^2(pi x) sin^2(pi y)` and pressure `cos(pi x) cos(pi y)` on the unit square,
/// stabilization off. Returns the H1-seminorm velocity error per level `n x n`.
pub fn spatial_convergence(levels: &[usize], nu: f64) -> Result<ConvergenceStudy, FomError> {
    let s = |t: f64| (PI * t).sin();
    let c = |t: f64| (PI * t).cos();
    let force = BodyForce::field(move |x, _t| {
        let (sx, cx, sy, cy) = (s(x.x), c(x.x), s(x.y), c(x.y));
        let p2 = PI * PI;
        Vector2::new(
            PI * (16.0 * p2 * nu * sx * sx * sy * cy - 4.0 * p2 * nu * sy * cy
                + 4.0 * p2 * sx.powi(3) * sy * sy * cx
                - sx * cy),
            PI * (-16.0 * p2 * nu * sx * sy * sy * cx
                + 4.0 * p2 * nu * sx * cx
                + 4.0 * p2 * sx * sx * sy.powi(3) * cy
                - sy * cx),
        )
    });
    let grad = |x: &Point2<f64>| {
        let p2 = PI * PI;
        let cross = p2 * (2.0 * PI * x.x).sin() * (2.0 * PI * x.y).sin();
        Matrix2::new(
            cross,
            2.0 * p2 * s(x.x).powi(2) * (2.0 * PI * x.y).cos(),
            -2.0 * p2 * s(x.y).powi(2) * (2.0 * PI * x.x).cos(),
            -cross,
        )
    };
    // Large steps drive backward Euler to the steady state.
    let dt = 1e4;
    let mut study = ConvergenceStudy {
        steps: Vec::new(),
        errors: Vec::new(),
    };
    for &n in levels {
        let fes = closed_unit_square(n);
        let ops = OperatorSet::assemble(fes.clone(), &params(nu, dt, force.clone()));
        let zero = FnBoundary(|_: &Point2<f64>, _| Vector2::zeros());
        let mut cfg = SolverConfig::new(dt, 3.0 * dt, 3);
        cfg.vms_enabled = false;
        cfg.ramp_steps = 0;
        cfg.newton.rel_tol = 1e-12;
        cfg.newton.abs_tol = 1e-10;
        let solver = FomSolver::new(&ops, &zero, cfg)?;
        let last = solver.run(&mut |_| {})?.states.pop().expect("one snapshot");
        study.steps.push(1.0 / n as f64);
        study.errors.push(h1_seminorm_error(&fes, &last.u, grad));
    }
    Ok(study)
}

/// Unsteady flow `u = a(t) (x^2, -2xy)`, `p = a(t) (x + y)` with `a(t) = 1 + sin(2t)`,
/// exactly representable in space, so only the time discretization contributes.
/// Returns the H1-seminorm velocity error at `t_final` per time step.
pub fn temporal_convergence(
    dts: &[f64],
    nu: f64,
    t_final: f64,
) -> Result<ConvergenceStudy, FomError> {
    let a = |t: f64| 1.0 + (2.0 * t).sin();
    let da = |t: f64| 2.0 * (2.0 * t).cos();
    let shape = |x: &Point2<f64>| Vector2::new(x.x * x.x, -2.0 * x.x * x.y);
    let force = BodyForce::field(move |x, t| {
        let at = a(t);
        shape(x) * da(t) + Vector2::new(2.0 * x.x.powi(3), 2.0 * x.x * x.x * x.y) * (at * at)
            - Vector2::new(2.0, 0.0) * (nu * at)
            + Vector2::new(1.0, 1.0) * at
    });
    let fes = closed_unit_square(3);
    let exact_grad =
        |x: &Point2<f64>, t: f64| Matrix2::new(2.0 * x.x, 0.0, -2.0 * x.y, -2.0 * x.x) * a(t);
    let mut study = ConvergenceStudy {
        steps: Vec::new(),
        errors: Vec::new(),
    };
    for &dt in dts {
        let ops = OperatorSet::assemble(fes.clone(), &params(nu, dt, force.clone()));
        let data = FnBoundary(move |x: &Point2<f64>, t| shape(x) * a(t));
        let mut cfg = SolverConfig::new(dt, t_final, 1);
        cfg.vms_enabled = false;
        cfg.ramp_steps = 0;
        cfg.newton.rel_tol = 1e-12;
        cfg.newton.abs_tol = 1e-12;
        let solver = FomSolver::new(&ops, &data, cfg)?;
        let init = FomState {
            u: fes.interpolate_velocity(|x| shape(x) * a(0.0)),
            p: fes.interpolate_pressure(|x| (x.x + x.y) * a(0.0)),
            t: 0.0,
        };
        let last = solver
            .run_from(&init, 0, &mut |_| {})?
            .states
            .pop()
            .expect("snapshots");
        study.steps.push(dt);
        study
            .errors
            .push(h1_seminorm_error(&fes, &last.u, |x| exact_grad(x, last.t)));
    }
    Ok(study)
}

/// Channel `[0,2] x [0,1]` with the parabolic profile of peak 1 imposed on the whole
/// boundary, started from rest with stabilization on. Returns the relative H1-seminorm
/// velocity error and the relative L2 pressure error (up to a constant) after `steps`.
///
/// With a traction-free outlet the parabola does not solve the discrete problem: the
/// natural condition of the conservative convection and symmetric stress forms
/// contains the momentum flux and the tangential stress.
pub fn poiseuille_errors(nu: f64, dt: f64, steps: usize) -> Result<(f64, f64), FomError> {
    let profile = |x: &Point2<f64>| Vector2::new(4.0 * x.y * (1.0 - x.y), 0.0);
    let mesh = build_rectangle_mesh(2.0, 1.0, 8, 4)
        .expect("valid rectangle")
        .retag(|_, _| Some(BoundaryTag::Wall));
    let fes = Arc::new(FeSystem::new(mesh));
    let ops = OperatorSet::assemble(fes.clone(), &params(nu, dt, BodyForce::Zero));
    let data = FnBoundary(move |x: &Point2<f64>, _| profile(x));
    let mut cfg = SolverConfig::new(dt, steps as f64 * dt, steps);
    cfg.ramp_steps = 5;
    let solver = FomSolver::new(&ops, &data, cfg)?;
    let last = solver.run(&mut |_| {})?.states.pop().expect("one snapshot");

    let exact = fes.interpolate_velocity(profile);
    let e = &last.u - &exact;
    let err_u = (ops.h1_gramian.bilinear(&e, &e) / ops.h1_gramian.bilinear(&exact, &exact)).sqrt();
    let mean = |v: &DVector<f64>| v.sum() / v.len() as f64;
    let p_exact = fes.interpolate_pressure(|x| -8.0 * nu * x.x);
    let p_ref = p_exact.add_scalar(-mean(&p_exact));
    let ep = last.p.add_scalar(-mean(&last.p)) - &p_ref;
    let err_p =
        (ops.pressure_mass.bilinear(&ep, &ep) / ops.pressure_mass.bilinear(&p_ref, &p_ref)).sqrt();
    Ok((err_u, err_p))
}

/// Discrete inf-sup constant
/// `min_q max_v (B v, q) / (|v|_{X_u} |q|_{X_p})` over Dirichlet-free velocities,
/// computed densely. Pressure directions with zero constant (the constant mode of a
/// closed domain) are excluded.
pub fn inf_sup_constant(ops: &OperatorSet) -> f64 {
    let free = ops.fes().free_velocity_dofs();
    let np = ops.n_pressure();
    let xu = ops.h1_gramian.to_dense();
    let b = ops.divergence.to_dense();
    let xf = DMatrix::from_fn(free.len(), free.len(), |i, j| xu[(free[i], free[j])]);
    let bf = DMatrix::from_fn(np, free.len(), |l, j| b[(l, free[j])]);
    let chol = xf.cholesky().expect("velocity Gramian is SPD on free dofs");
    let schur = &bf * chol.solve(&bf.transpose());
    let lp = ops
        .pressure_mass
        .to_dense()
        .cholesky()
        .expect("pressure mass is SPD")
        .l();
    let lp_inv = lp.try_inverse().expect("triangular factor is invertible");
    let sym = &lp_inv * schur * lp_inv.transpose();
    let sym = (&sym + sym.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    let top = eig.max();
    eig.iter()
        .copied()
        .filter(|&l| l > 1e-10 * top)
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

/// Inf-sup constants on the closed `n x n` unit-square meshes.
pub fn inf_sup_on_unit_squares(levels: &[usize]) -> Vec<f64> {
    levels
        .iter()
        .map(|&n| {
            let ops =
                OperatorSet::assemble(closed_unit_square(n), &params(1.0, 1.0, BodyForce::Zero));
            inf_sup_constant(&ops)
        })
        .collect()
}
