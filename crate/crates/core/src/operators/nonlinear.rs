//! Convection, VMS terms and their Jacobian with the stabilization parameters frozen.

use nalgebra::{DVector, Vector2};
use rayon::prelude::*;

use super::stabilization::PointState;
use super::{OperatorSet, StabilizationField};
use crate::discretization::{BoundaryFace, VelocityAtPoint};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonlinearOptions {
    /// Include the stabilization terms `D` and `E`.
    pub vms: bool,
    /// Assemble the Jacobian.
    pub jacobian: bool,
}

/// Nonlinear residual contributions `[C(u)u + D; -E]` and optionally their Jacobian
/// with respect to `(u, p)` in the saddle-point pattern.
#[derive(Debug, Clone)]
pub struct NonlinearAssembly {
    pub velocity: DVector<f64>,
    pub pressure: DVector<f64>,
    pub jacobian: Option<CsrMatrix>,
}

/// The four momentum terms of `D` and the continuity term `E`, kept separate.
#[derive(Debug, Clone)]
pub struct VmsTerms {
    /// `tau (phi_i, r (x) u)` contribution: `tau r_c (u . grad phi)`.
    pub cross_residual_velocity: DVector<f64>,
    /// `tau u_c (r . grad phi)`.
    pub cross_velocity_residual: DVector<f64>,
    /// `-tau^2 r_c (r . grad phi)`.
    pub quadratic: DVector<f64>,
    /// `tau_C r_C div phi`.
    pub grad_div: DVector<f64>,
    /// `E_l = (grad psi_l, tau r_M)`.
    pub continuity: DVector<f64>,
}

impl VmsTerms {
    /// `D` as the sum of the four momentum terms.
    pub fn momentum(&self) -> DVector<f64> {
        &self.cross_residual_velocity
            + &self.cross_velocity_residual
            + &self.quadratic
            + &self.grad_div
    }
}

struct CellOut {
    ru: [f64; 12],
    rp: [f64; 3],
    jac: Option<Box<[f64; 225]>>,
}

fn cell_kernel(
    ops: &OperatorSet,
    cell: usize,
    state: (&DVector<f64>, &DVector<f64>, &DVector<f64>),
    t: f64,
    tau: &StabilizationField,
    opts: NonlinearOptions,
) -> CellOut {
    let (u, p, u_prev) = state;
    let fes = ops.fes();
    let (nu, dt) = (ops.nu, ops.dt);
    let ul = fes.local_velocity(cell, u);
    let upl = fes.local_velocity(cell, u_prev);
    let pl = fes.local_pressure(cell, p);
    let mut out = CellOut {
        ru: [0.0; 12],
        rp: [0.0; 3],
        jac: opts.jacobian.then(|| Box::new([0.0; 225])),
    };
    for q in 0..fes.quadrature().len() {
        let b = fes.evaluate_basis(cell, q);
        let w = b.jxw;
        let (uv, residual) = if opts.vms {
            let ps = PointState::eval(&b, &ul, &upl, &pl, dt, nu, &ops.force, t);
            (ps.u, Some(ps.residual))
        } else {
            (VelocityAtPoint::eval(&b, &ul), None)
        };
        let uval = uv.value;
        let ugp: [f64; 6] = std::array::from_fn(|k| uval.dot(&b.p2_grad[k]));

        for i in 0..12 {
            let (k, c) = (i / 2, i % 2);
            out.ru[i] -= w * uval[c] * ugp[k];
        }
        if let Some(jac) = out.jac.as_deref_mut() {
            for i in 0..12 {
                let (k, c) = (i / 2, i % 2);
                for j in 0..12 {
                    let (m, d) = (j / 2, j % 2);
                    let same = if c == d { ugp[k] } else { 0.0 };
                    jac[i * 15 + j] -= w * b.p2[m] * (same + uval[c] * b.p2_grad[k][d]);
                }
            }
        }

        let Some(res) = residual else { continue };
        let (tm, tc) = (tau.tau_m(cell, q), tau.tau_c(cell, q));
        let r = res.momentum;
        let rc = res.continuity;
        let rgp: [f64; 6] = std::array::from_fn(|k| r.dot(&b.p2_grad[k]));
        for i in 0..12 {
            let (k, c) = (i / 2, i % 2);
            out.ru[i] += w
                * (tm * r[c] * ugp[k] + tm * uval[c] * rgp[k] - tm * tm * r[c] * rgp[k]
                    + tc * rc * b.p2_grad[k][c]);
        }
        for l in 0..3 {
            out.rp[l] -= w * tm * b.p1_grad[l].dot(&r);
        }

        let Some(jac) = out.jac.as_deref_mut() else {
            continue;
        };
        let divu = uv.divergence();
        // Variations of r_M, r_C and u with respect to each local unknown.
        let mut dr = [Vector2::zeros(); 15];
        let mut drc = [0.0; 15];
        let mut du = [Vector2::zeros(); 15];
        for j in 0..12 {
            let (m, d) = (j / 2, j % 2);
            let phi = b.p2[m];
            let g = b.p2_grad[m];
            let h = b.p2_hess[m];
            let diag = phi / dt + ugp[m] + phi * divu - nu * h.trace();
            for a in 0..2 {
                let own = if a == d { diag } else { 0.0 };
                dr[j][a] = own + uv.grad[(a, d)] * phi + uval[a] * g[d] - nu * h[(a, d)];
            }
            drc[j] = g[d];
            du[j][d] = phi;
        }
        for l in 0..3 {
            dr[12 + l] = b.p1_grad[l];
        }
        for i in 0..12 {
            let (k, c) = (i / 2, i % 2);
            let gk = b.p2_grad[k];
            for j in 0..15 {
                let dug = du[j].dot(&gk);
                let drg = dr[j].dot(&gk);
                let v = tm * (dr[j][c] * ugp[k] + r[c] * dug)
                    + tm * (du[j][c] * rgp[k] + uval[c] * drg)
                    - tm * tm * (dr[j][c] * rgp[k] + r[c] * drg)
                    + tc * drc[j] * gk[c];
                jac[i * 15 + j] += w * v;
            }
        }
        for l in 0..3 {
            for j in 0..15 {
                jac[(12 + l) * 15 + j] -= w * tm * b.p1_grad[l].dot(&dr[j]);
            }
        }
    }
    out
}

/// Outflow term `((u . n) u, phi_i)` and its Jacobian, added into `residual` and `jacobian`.
fn add_outlet_flux(
    ops: &OperatorSet,
    u: &DVector<f64>,
    residual: &mut DVector<f64>,
    mut jacobian: Option<&mut CsrMatrix>,
) {
    for face in ops.outlet_faces() {
        let n = face.normal;
        let dofs: [usize; 6] = std::array::from_fn(|i| 2 * face.nodes[i / 2] + i % 2);
        let ul: [Vector2<f64>; 3] =
            std::array::from_fn(|k| Vector2::new(u[dofs[2 * k]], u[dofs[2 * k + 1]]));
        let mut local = [0.0; 36];
        for (s, w) in face.quadrature() {
            let phi = BoundaryFace::basis(s);
            let uq: Vector2<f64> = (0..3).map(|k| ul[k] * phi[k]).sum();
            let un = uq.dot(&n);
            for i in 0..6 {
                let (k, c) = (i / 2, i % 2);
                residual[dofs[i]] += w * un * uq[c] * phi[k];
                for j in 0..6 {
                    let (m, d) = (j / 2, j % 2);
                    let same = if c == d { un } else { 0.0 };
                    local[i * 6 + j] += w * phi[m] * phi[k] * (n[d] * uq[c] + same);
                }
            }
        }
        if let Some(jm) = jacobian.as_deref_mut() {
            jm.add_block(&dofs, &dofs, &local);
        }
    }
}

pub(super) fn assemble_nonlinear(
    ops: &OperatorSet,
    u: &DVector<f64>,
    p: &DVector<f64>,
    u_prev: &DVector<f64>,
    t: f64,
    tau: &StabilizationField,
    opts: NonlinearOptions,
) -> NonlinearAssembly {
    let fes = ops.fes();
    let nv = fes.n_velocity();
    let outs: Vec<CellOut> = (0..fes.n_cells())
        .into_par_iter()
        .map(|c| cell_kernel(ops, c, (u, p, u_prev), t, tau, opts))
        .collect();
    let mut velocity = DVector::zeros(nv);
    let mut pressure = DVector::zeros(fes.n_pressure());
    let mut jacobian = opts.jacobian.then(|| ops.saddle_pattern().zeros_like());
    for (cell, o) in outs.iter().enumerate() {
        let vd = fes.cell_velocity_dofs(cell);
        let pd = fes.cell_vertices(cell);
        for (i, &g) in vd.iter().enumerate() {
            velocity[g] += o.ru[i];
        }
        for (l, &g) in pd.iter().enumerate() {
            pressure[g] += o.rp[l];
        }
        if let (Some(jm), Some(local)) = (jacobian.as_mut(), o.jac.as_deref()) {
            let mut all = [0usize; 15];
            all[..12].copy_from_slice(&vd);
            for l in 0..3 {
                all[12 + l] = nv + pd[l];
            }
            jm.add_block(&all, &all, local);
        }
    }
    add_outlet_flux(ops, u, &mut velocity, jacobian.as_mut());
    NonlinearAssembly {
        velocity,
        pressure,
        jacobian,
    }
}

/// `C(u) u` with `C(u)_ij = -(phi_j (x) u, grad phi_i) + ((u . n) phi_j, phi_i)_out`.
pub fn convection_vector(ops: &OperatorSet, u: &DVector<f64>) -> DVector<f64> {
    let fes = ops.fes();
    let mut out = DVector::zeros(fes.n_velocity());
    for cell in 0..fes.n_cells() {
        let ul = fes.local_velocity(cell, u);
        let dofs = fes.cell_velocity_dofs(cell);
        for q in 0..fes.quadrature().len() {
            let b = fes.evaluate_basis(cell, q);
            let uq: Vector2<f64> = (0..6).map(|k| ul[k] * b.p2[k]).sum();
            for (i, &g) in dofs.iter().enumerate() {
                out[g] -= b.jxw * uq[i % 2] * uq.dot(&b.p2_grad[i / 2]);
            }
        }
    }
    add_outlet_flux(ops, u, &mut out, None);
    out
}

/// The convection matrix `C(w)` for a given advecting field `w`.
pub fn assemble_convection(ops: &OperatorSet, w: &DVector<f64>) -> CsrMatrix {
    let fes = ops.fes();
    let mut c_mat = ops.mass.zeros_like();
    let mut local = [0.0; 144];
    for cell in 0..fes.n_cells() {
        local.fill(0.0);
        let wl = fes.local_velocity(cell, w);
        for q in 0..fes.quadrature().len() {
            let b = fes.evaluate_basis(cell, q);
            let wq: Vector2<f64> = (0..6).map(|k| wl[k] * b.p2[k]).sum();
            for n in 0..6 {
                let adv = wq.dot(&b.p2_grad[n]);
                for m in 0..6 {
                    let v = -b.jxw * b.p2[m] * adv;
                    local[(2 * n) * 12 + 2 * m] += v;
                    local[(2 * n + 1) * 12 + 2 * m + 1] += v;
                }
            }
        }
        let dofs = fes.cell_velocity_dofs(cell);
        c_mat.add_block(&dofs, &dofs, &local);
    }
    for face in ops.outlet_faces() {
        let dofs: [usize; 6] = std::array::from_fn(|i| 2 * face.nodes[i / 2] + i % 2);
        let mut local = [0.0; 36];
        for (s, wt) in face.quadrature() {
            let phi = BoundaryFace::basis(s);
            let wn: f64 = (0..3)
                .map(|k| {
                    phi[k] * (w[dofs[2 * k]] * face.normal.x + w[dofs[2 * k + 1]] * face.normal.y)
                })
                .sum();
            for k in 0..3 {
                for m in 0..3 {
                    let v = wt * wn * phi[k] * phi[m];
                    local[(2 * k) * 6 + 2 * m] += v;
                    local[(2 * k + 1) * 6 + 2 * m + 1] += v;
                }
            }
        }
        c_mat.add_block(&dofs, &dofs, &local);
    }
    c_mat
}

/// Evaluates `D` term by term and `E` for the given state and coefficients.
pub fn assemble_vms(
    ops: &OperatorSet,
    u: &DVector<f64>,
    p: &DVector<f64>,
    u_prev: &DVector<f64>,
    t: f64,
    tau: &StabilizationField,
) -> VmsTerms {
    let fes = ops.fes();
    let nv = fes.n_velocity();
    let mut terms = VmsTerms {
        cross_residual_velocity: DVector::zeros(nv),
        cross_velocity_residual: DVector::zeros(nv),
        quadratic: DVector::zeros(nv),
        grad_div: DVector::zeros(nv),
        continuity: DVector::zeros(fes.n_pressure()),
    };
    for cell in 0..fes.n_cells() {
        let ul = fes.local_velocity(cell, u);
        let upl = fes.local_velocity(cell, u_prev);
        let pl = fes.local_pressure(cell, p);
        let dofs = fes.cell_velocity_dofs(cell);
        let verts = fes.cell_vertices(cell);
        for q in 0..fes.quadrature().len() {
            let b = fes.evaluate_basis(cell, q);
            let ps = PointState::eval(&b, &ul, &upl, &pl, ops.dt, ops.nu, &ops.force, t);
            let (tm, tc) = (tau.tau_m(cell, q), tau.tau_c(cell, q));
            let uq = ps.u.value;
            let r = ps.residual.momentum;
            let w = b.jxw;
            for (i, &g) in dofs.iter().enumerate() {
                let (k, c) = (i / 2, i % 2);
                let gk = b.p2_grad[k];
                terms.cross_residual_velocity[g] += w * tm * r[c] * uq.dot(&gk);
                terms.cross_velocity_residual[g] += w * tm * uq[c] * r.dot(&gk);
                terms.quadratic[g] -= w * tm * tm * r[c] * r.dot(&gk);
                terms.grad_div[g] += w * tc * ps.residual.continuity * gk[c];
            }
            for (l, &g) in verts.iter().enumerate() {
                terms.continuity[g] += w * tm * b.p1_grad[l].dot(&r);
            }
        }
    }
    terms
}
