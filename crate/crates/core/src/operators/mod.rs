//! Galerkin operators, VMS terms and the nonlinear residual of the discrete
//! Navier-Stokes system.
//!
//! Velocity unknowns are ordered `2 * node + component`, pressure unknowns by
//! vertex. Saddle-point vectors stack velocity first, then pressure.

mod nonlinear;
mod stabilization;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DVector, Point2, Vector2};
use rayon::prelude::*;

use crate::discretization::{BoundaryFace, BoundaryTag, FeSystem};
use crate::sparse::CsrMatrix;

pub use nonlinear::{
    assemble_convection, assemble_vms, convection_vector, NonlinearAssembly, NonlinearOptions,
    VmsTerms,
};
pub use stabilization::{
    stabilization_coefficients, strong_residuals, StabilizationField, StrongResidual,
};

pub const DEFAULT_C_INV: f64 = 36.0;

type ForceFn = dyn Fn(&Point2<f64>, f64) -> Vector2<f64> + Send + Sync;

/// Volume force `f(x, t)`.
#[derive(Clone, Default)]
pub enum BodyForce {
    #[default]
    Zero,
    Field(Arc<ForceFn>),
}

impl BodyForce {
    pub fn field(f: impl Fn(&Point2<f64>, f64) -> Vector2<f64> + Send + Sync + 'static) -> Self {
        BodyForce::Field(Arc::new(f))
    }

    pub fn eval(&self, x: &Point2<f64>, t: f64) -> Vector2<f64> {
        match self {
            BodyForce::Zero => Vector2::zeros(),
            BodyForce::Field(f) => f(x, t),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, BodyForce::Zero)
    }
}

impl fmt::Debug for BodyForce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BodyForce::Zero => f.write_str("BodyForce::Zero"),
            BodyForce::Field(_) => f.write_str("BodyForce::Field(..)"),
        }
    }
}

/// Physical and numerical parameters shared by the full and reduced models.
#[derive(Debug, Clone)]
pub struct Parameters {
    pub nu: f64,
    pub dt: f64,
    pub c_inv: f64,
    pub force: BodyForce,
}

/// Time-independent matrices of the discretization.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    fes: Arc<FeSystem>,
    pub nu: f64,
    pub dt: f64,
    pub c_inv: f64,
    pub force: BodyForce,
    /// `(phi_j, phi_i)`
    pub mass: CsrMatrix,
    /// `(sym grad phi_j, sym grad phi_i)`; the viscous operator is `2 nu A`.
    pub diffusion: CsrMatrix,
    /// `B_li = -(psi_l, div phi_i)`, pressure rows by velocity columns.
    pub divergence: CsrMatrix,
    /// `(grad phi_j : grad phi_i)`, the H1-seminorm Gramian.
    pub h1_gramian: CsrMatrix,
    /// `(psi_m, psi_l)`
    pub pressure_mass: CsrMatrix,
    /// `(curl phi_j, curl phi_i)`
    pub curl_gramian: CsrMatrix,
    /// `(grad psi_l, phi_i)`, velocity rows by pressure columns.
    pub pressure_gradient: CsrMatrix,
    saddle_pattern: CsrMatrix,
    outlet: Vec<BoundaryFace>,
}

struct StaticLocal {
    mass: [f64; 144],
    diffusion: [f64; 144],
    h1: [f64; 144],
    curl: [f64; 144],
    divergence: [f64; 36],
    gradient: [f64; 36],
    pressure_mass: [f64; 9],
}

fn static_local(fes: &FeSystem, cell: usize) -> StaticLocal {
    let mut s = StaticLocal {
        mass: [0.0; 144],
        diffusion: [0.0; 144],
        h1: [0.0; 144],
        curl: [0.0; 144],
        divergence: [0.0; 36],
        gradient: [0.0; 36],
        pressure_mass: [0.0; 9],
    };
    for q in 0..fes.quadrature().len() {
        let b = fes.evaluate_basis(cell, q);
        let w = b.jxw;
        for i in 0..12 {
            let (k, c) = (i / 2, i % 2);
            let gk = b.p2_grad[k];
            let curl_i = if c == 0 { -gk.y } else { gk.x };
            for j in 0..12 {
                let (m, d) = (j / 2, j % 2);
                let gm = b.p2_grad[m];
                let same = if c == d { 1.0 } else { 0.0 };
                let idx = i * 12 + j;
                s.mass[idx] += w * same * b.p2[k] * b.p2[m];
                s.h1[idx] += w * same * gk.dot(&gm);
                s.diffusion[idx] += w * 0.5 * (same * gk.dot(&gm) + gk[d] * gm[c]);
                let curl_j = if d == 0 { -gm.y } else { gm.x };
                s.curl[idx] += w * curl_i * curl_j;
            }
            for l in 0..3 {
                s.divergence[l * 12 + i] -= w * b.p1[l] * gk[c];
                s.gradient[i * 3 + l] += w * b.p1_grad[l][c] * b.p2[k];
            }
        }
        for l in 0..3 {
            for m in 0..3 {
                s.pressure_mass[l * 3 + m] += w * b.p1[l] * b.p1[m];
            }
        }
    }
    s
}

impl OperatorSet {
    pub fn assemble(fes: Arc<FeSystem>, params: &Parameters) -> Self {
        let nv = fes.n_velocity();
        let np = fes.n_pressure();
        let cells = 0..fes.n_cells();
        let vdofs: Vec<[usize; 12]> = cells.clone().map(|c| fes.cell_velocity_dofs(c)).collect();
        let pdofs: Vec<[usize; 3]> = cells.clone().map(|c| *fes.cell_vertices(c)).collect();

        let vv = CsrMatrix::from_blocks(nv, nv, vdofs.iter().map(|d| (d, d)));
        let pv = CsrMatrix::from_blocks(np, nv, pdofs.iter().zip(&vdofs));
        let vp = CsrMatrix::from_blocks(nv, np, vdofs.iter().zip(&pdofs));
        let pp = CsrMatrix::from_blocks(np, np, pdofs.iter().map(|d| (d, d)));
        let saddle_pattern = CsrMatrix::from_blocks(
            nv + np,
            nv + np,
            vdofs.iter().zip(&pdofs).map(|(v, p)| {
                let all: Vec<usize> = v.iter().copied().chain(p.iter().map(|&l| nv + l)).collect();
                (all.clone(), all)
            }),
        );

        let locals: Vec<StaticLocal> = cells
            .into_par_iter()
            .map(|c| static_local(&fes, c))
            .collect();
        let mut ops = OperatorSet {
            nu: params.nu,
            dt: params.dt,
            c_inv: params.c_inv,
            force: params.force.clone(),
            mass: vv.clone(),
            diffusion: vv.clone(),
            h1_gramian: vv.clone(),
            curl_gramian: vv,
            divergence: pv,
            pressure_gradient: vp,
            pressure_mass: pp,
            saddle_pattern,
            outlet: fes.boundary_faces(BoundaryTag::Outlet),
            fes: fes.clone(),
        };
        for (cell, s) in locals.iter().enumerate() {
            let v = &vdofs[cell];
            let p = &pdofs[cell];
            ops.mass.add_block(v, v, &s.mass);
            ops.diffusion.add_block(v, v, &s.diffusion);
            ops.h1_gramian.add_block(v, v, &s.h1);
            ops.curl_gramian.add_block(v, v, &s.curl);
            ops.divergence.add_block(p, v, &s.divergence);
            ops.pressure_gradient.add_block(v, p, &s.gradient);
            ops.pressure_mass.add_block(p, p, &s.pressure_mass);
        }
        ops
    }

    pub fn fes(&self) -> &FeSystem {
        &self.fes
    }

    pub fn fes_arc(&self) -> &Arc<FeSystem> {
        &self.fes
    }

    pub fn n_velocity(&self) -> usize {
        self.fes.n_velocity()
    }

    pub fn n_pressure(&self) -> usize {
        self.fes.n_pressure()
    }

    pub fn parameters(&self) -> Parameters {
        Parameters {
            nu: self.nu,
            dt: self.dt,
            c_inv: self.c_inv,
            force: self.force.clone(),
        }
    }

    /// Zero matrix with the velocity-pressure coupling pattern.
    /// Outflow edges, where convection carries the flux term `((u . n) u, v)`.
    pub fn outlet_faces(&self) -> &[BoundaryFace] {
        &self.outlet
    }

    pub fn saddle_pattern(&self) -> &CsrMatrix {
        &self.saddle_pattern
    }

    /// Load vector `F_i = (f(t), phi_i)`.
    pub fn forcing(&self, t: f64) -> DVector<f64> {
        let mut f = DVector::zeros(self.n_velocity());
        if self.force.is_zero() {
            return f;
        }
        let fes = &self.fes;
        for cell in 0..fes.n_cells() {
            let dofs = fes.cell_velocity_dofs(cell);
            for q in 0..fes.quadrature().len() {
                let b = fes.evaluate_basis(cell, q);
                let fq = self.force.eval(&b.x, t);
                for (i, &g) in dofs.iter().enumerate() {
                    f[g] += b.jxw * fq[i % 2] * b.p2[i / 2];
                }
            }
        }
        f
    }

    /// Jacobian of the linear part of the discrete system:
    /// `[[M/dt + 2 nu A, B^T], [B, 0]]`.
    pub fn linear_saddle(&self) -> CsrMatrix {
        let nv = self.n_velocity();
        let mut j = self.saddle_pattern.zeros_like();
        add_into(&mut j, &self.mass, 0, 0, 1.0 / self.dt);
        add_into(&mut j, &self.diffusion, 0, 0, 2.0 * self.nu);
        add_into(&mut j, &self.divergence, nv, 0, 1.0);
        add_transposed_into(&mut j, &self.divergence, 0, nv, 1.0);
        j
    }

    /// Residual of the linear part, `[M (u - u_prev)/dt + 2 nu A u + B^T p - F(t); B u]`.
    pub fn linear_residual(
        &self,
        u: &DVector<f64>,
        p: &DVector<f64>,
        u_prev: &DVector<f64>,
        t: f64,
    ) -> (DVector<f64>, DVector<f64>) {
        let du = u - u_prev;
        let ru = self.mass.mul_vec(&du) / self.dt
            + self.diffusion.mul_vec(u) * (2.0 * self.nu)
            + self.divergence.transpose_mul_vec(p)
            - self.forcing(t);
        (ru, self.divergence.mul_vec(u))
    }

    /// Residual of the full discrete system at `(u, p)` with `tau` evaluated from `u`,
    /// stacked `[momentum; continuity]`, without boundary conditions applied.
    pub fn system(
        &self,
        u: &DVector<f64>,
        p: &DVector<f64>,
        u_prev: &DVector<f64>,
        t: f64,
        vms: bool,
        jacobian: bool,
    ) -> SystemEval {
        let nv = self.n_velocity();
        let np = self.n_pressure();
        let tau = StabilizationField::for_operators(self, u);
        let (lu, lp) = self.linear_residual(u, p, u_prev, t);
        let nl = self.nonlinear(u, p, u_prev, t, &tau, NonlinearOptions { vms, jacobian });
        let mut residual = DVector::zeros(nv + np);
        residual.rows_mut(0, nv).copy_from(&(lu + nl.velocity));
        residual.rows_mut(nv, np).copy_from(&(lp + nl.pressure));
        let jacobian = nl.jacobian.map(|mut j| {
            j.axpy(1.0, &self.linear_saddle());
            j
        });
        SystemEval { residual, jacobian }
    }

    /// Convection, and when `vms` is set the stabilization terms, with their Jacobian.
    pub fn nonlinear(
        &self,
        u: &DVector<f64>,
        p: &DVector<f64>,
        u_prev: &DVector<f64>,
        t: f64,
        tau: &StabilizationField,
        opts: NonlinearOptions,
    ) -> NonlinearAssembly {
        nonlinear::assemble_nonlinear(self, u, p, u_prev, t, tau, opts)
    }
}

/// Residual and optional Jacobian of the coupled system.
#[derive(Debug, Clone)]
pub struct SystemEval {
    pub residual: DVector<f64>,
    pub jacobian: Option<CsrMatrix>,
}

/// Scalar P1 stiffness matrix `(grad psi_m, grad psi_l)`.
pub fn assemble_p1_stiffness(fes: &FeSystem) -> CsrMatrix {
    let np = fes.n_pressure();
    let verts: Vec<[usize; 3]> = (0..fes.n_cells()).map(|c| *fes.cell_vertices(c)).collect();
    let mut k = CsrMatrix::from_blocks(np, np, verts.iter().map(|v| (v, v)));
    for (cell, v) in verts.iter().enumerate() {
        let b = fes.evaluate_basis(cell, 0);
        let area = fes.mesh().map(cell).area();
        let mut local = [0.0; 9];
        for l in 0..3 {
            for m in 0..3 {
                local[l * 3 + m] = area * b.p1_grad[l].dot(&b.p1_grad[m]);
            }
        }
        k.add_block(v, v, &local);
    }
    k
}

fn add_into(dst: &mut CsrMatrix, src: &CsrMatrix, row0: usize, col0: usize, s: f64) {
    for i in 0..src.nrows() {
        let (c, v) = src.row(i);
        for (&j, a) in c.iter().zip(v) {
            dst.add(row0 + i, col0 + j, s * a);
        }
    }
}

fn add_transposed_into(dst: &mut CsrMatrix, src: &CsrMatrix, row0: usize, col0: usize, s: f64) {
    for i in 0..src.nrows() {
        let (c, v) = src.row(i);
        for (&j, a) in c.iter().zip(v) {
            dst.add(row0 + j, col0 + i, s * a);
        }
    }
}

#[cfg(test)]
mod tests;
