use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix6, Point2, Vector2, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::discretization::{build_rectangle_mesh, BoundaryEdge, BoundaryTag, Mesh};

fn params(nu: f64, dt: f64) -> Parameters {
    Parameters {
        nu,
        dt,
        c_inv: DEFAULT_C_INV,
        force: BodyForce::Zero,
    }
}

fn reference_triangle() -> Arc<FeSystem> {
    let verts = vec![
        Point2::new(0.0, 0.0),
        Point2::new(1.0, 0.0),
        Point2::new(0.0, 1.0),
    ];
    let boundary = [[0, 1], [1, 2], [2, 0]]
        .into_iter()
        .map(|vertices| BoundaryEdge {
            vertices,
            tag: BoundaryTag::Wall,
        })
        .collect();
    Arc::new(FeSystem::new(
        Mesh::new(verts, vec![[0, 1, 2]], boundary).unwrap(),
    ))
}

fn rectangle(nx: usize, ny: usize) -> Arc<FeSystem> {
    Arc::new(FeSystem::new(
        build_rectangle_mesh(2.0, 1.0, nx, ny).unwrap(),
    ))
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * rng.random_range(-1.0..1.0))
}

#[test]
fn reference_triangle_pressure_mass() {
    let ops = OperatorSet::assemble(reference_triangle(), &params(1.0, 1.0));
    let expected =
        DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 2.0]) / 24.0;
    assert!((ops.pressure_mass.to_dense() - expected).amax() < 1e-15);
}

#[test]
fn reference_triangle_quadratic_mass() {
    let ops = OperatorSet::assemble(reference_triangle(), &params(1.0, 1.0));
    #[rustfmt::skip]
    let scalar = DMatrix::from_row_slice(6, 6, &[
        6.0, -1.0, -1.0, 0.0, -4.0, 0.0,
        -1.0, 6.0, -1.0, 0.0, 0.0, -4.0,
        -1.0, -1.0, 6.0, -4.0, 0.0, 0.0,
        0.0, 0.0, -4.0, 32.0, 16.0, 16.0,
        -4.0, 0.0, 0.0, 16.0, 32.0, 16.0,
        0.0, -4.0, 0.0, 16.0, 16.0, 32.0,
    ]) / 360.0;
    let m = ops.mass.to_dense();
    let nodes = ops.fes().cell_nodes(0);
    for a in 0..6 {
        for b in 0..6 {
            for c in 0..2 {
                assert!((m[(2 * nodes[a] + c, 2 * nodes[b] + c)] - scalar[(a, b)]).abs() < 1e-15);
                assert_eq!(m[(2 * nodes[a] + c, 2 * nodes[b] + 1 - c)], 0.0);
            }
        }
    }
}

#[test]
fn reference_triangle_pressure_gradient_of_linear_field() {
    // For p = x: (grad p, phi_i) = (e_x, phi_i), and P2 vertex functions integrate to zero.
    let fes = reference_triangle();
    let ops = OperatorSet::assemble(fes.clone(), &params(1.0, 1.0));
    let p = fes.interpolate_pressure(|x| x.x);
    let g = ops.pressure_gradient.mul_vec(&p);
    let nodes = fes.cell_nodes(0);
    for (k, &n) in nodes.iter().enumerate() {
        let expected = if k < 3 { 0.0 } else { 1.0 / 6.0 };
        assert!((g[2 * n] - expected).abs() < 1e-15);
        assert!(g[2 * n + 1].abs() < 1e-15);
    }
}

#[test]
fn symmetric_operators_are_symmetric() {
    let ops = OperatorSet::assemble(rectangle(4, 3), &params(0.1, 0.01));
    for m in [
        &ops.mass,
        &ops.diffusion,
        &ops.h1_gramian,
        &ops.pressure_mass,
        &ops.curl_gramian,
    ] {
        assert!(m.asymmetry() < 1e-14);
    }
}

#[test]
fn mass_sums_to_area() {
    let fes = rectangle(5, 3);
    let ops = OperatorSet::assemble(fes.clone(), &params(0.1, 0.01));
    let ex = fes.interpolate_velocity(|_| Vector2::new(1.0, 0.0));
    assert!((ops.mass.bilinear(&ex, &ex) - 2.0).abs() < 1e-13);
    let ones = DVector::from_element(fes.n_pressure(), 1.0);
    assert!((ops.pressure_mass.bilinear(&ones, &ones) - 2.0).abs() < 1e-13);
}

#[test]
fn gramians_of_affine_fields() {
    let fes = rectangle(3, 4);
    let ops = OperatorSet::assemble(fes.clone(), &params(0.1, 0.01));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let g = Matrix2::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let c = Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let u = fes.interpolate_velocity(|x| g * x.coords + c);
        let area = 2.0;
        let sym = (g + g.transpose()) * 0.5;
        assert!((ops.h1_gramian.bilinear(&u, &u) - area * g.norm_squared()).abs() < 1e-12);
        assert!((ops.diffusion.bilinear(&u, &u) - area * sym.norm_squared()).abs() < 1e-12);
        let curl = g[(1, 0)] - g[(0, 1)];
        assert!((ops.curl_gramian.bilinear(&u, &u) - area * curl * curl).abs() < 1e-12);
    }
}

#[test]
fn constant_pressure_is_invisible_to_interior_dofs() {
    let fes = rectangle(4, 4);
    let ops = OperatorSet::assemble(fes.clone(), &params(0.1, 0.01));
    let ones = DVector::from_element(fes.n_pressure(), 1.0);
    let bt = ops.divergence.transpose_mul_vec(&ones);
    for d in fes.free_velocity_dofs() {
        let n = d / 2;
        let x = fes.node_coords()[n];
        if x.x < 2.0 - 1e-12 {
            assert!(bt[d].abs() < 1e-14, "dof {d} at {x:?}: {}", bt[d]);
        }
    }
}

#[test]
fn divergence_free_quadratic_field_is_in_kernel_of_b() {
    let fes = rectangle(3, 3);
    let ops = OperatorSet::assemble(fes.clone(), &params(0.1, 0.01));
    let u = fes.interpolate_velocity(|x| Vector2::new(x.x * x.x + x.y, -2.0 * x.x * x.y + 3.0));
    assert!(ops.divergence.mul_vec(&u).amax() < 1e-14);
    let v = fes.interpolate_velocity(|x| Vector2::new(x.x, 0.0));
    // B v = -(psi_l, 1)
    let expected = -(ops
        .pressure_mass
        .mul_vec(&DVector::from_element(fes.n_pressure(), 1.0)));
    assert!((ops.divergence.mul_vec(&v) - expected).amax() < 1e-14);
}

#[test]
fn convection_matrix_reproduces_convection_vector() {
    let fes = rectangle(3, 2);
    let ops = OperatorSet::assemble(fes.clone(), &params(0.1, 0.01));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u = random_vec(&mut rng, fes.n_velocity(), 1.0);
    let c = assemble_convection(&ops, &u);
    assert!((c.mul_vec(&u) - convection_vector(&ops, &u)).amax() < 1e-13);
}

#[test]
fn zero_advection_gives_zero_convection() {
    let ops = OperatorSet::assemble(rectangle(2, 2), &params(0.1, 0.01));
    let zero = DVector::zeros(ops.n_velocity());
    assert!(assemble_convection(&ops, &zero)
        .values()
        .iter()
        .all(|&v| v == 0.0));
}

#[test]
fn rigid_rotation_residual_is_centripetal() {
    let fes = rectangle(2, 2);
    let u = fes.interpolate_velocity(|x| Vector2::new(-x.y, x.x));
    let p = DVector::zeros(fes.n_pressure());
    let res = strong_residuals(&fes, &u, &u, &p, 0.01, 0.3, &BodyForce::Zero, 0.0);
    let mut k = 0;
    for cell in 0..fes.n_cells() {
        for q in 0..fes.quadrature().len() {
            let x = fes.evaluate_basis(cell, q).x;
            assert!((res[k].momentum - Vector2::new(-x.x, -x.y)).norm() < 1e-12);
            assert!(res[k].continuity.abs() < 1e-12);
            k += 1;
        }
    }
}

#[test]
fn field_matches_pointwise_coefficients() {
    let fes = rectangle(2, 2);
    let u = fes.interpolate_velocity(|x| Vector2::new(1.0 + x.y, x.x * x.y));
    let field = StabilizationField::compute(&fes, &u, 0.01, 0.005, 36.0);
    for cell in 0..fes.n_cells() {
        let metric = fes.cell_metric(cell);
        for q in 0..fes.quadrature().len() {
            let x = fes.evaluate_basis(cell, q).x;
            let uq = Vector2::new(1.0 + x.y, x.x * x.y);
            let (tm, tc) = stabilization_coefficients(&metric, &uq, 0.01, 0.005, 36.0);
            assert!((field.tau_m(cell, q) - tm).abs() < 1e-15);
            assert!((field.tau_c(cell, q) - tc).abs() / tc < 1e-13);
        }
    }
}

/// Quadratic polynomial `c0 + c1 x + c2 y + c3 x^2 + c4 xy + c5 y^2`.
#[derive(Clone, Copy)]
struct Quadratic(Vector6<f64>);

impl Quadratic {
    fn value(&self, x: &Point2<f64>) -> f64 {
        monomials(x).dot(&self.0)
    }
    fn grad(&self, x: &Point2<f64>) -> Vector2<f64> {
        let c = &self.0;
        Vector2::new(
            c[1] + 2.0 * c[3] * x.x + c[4] * x.y,
            c[2] + c[4] * x.x + 2.0 * c[5] * x.y,
        )
    }
    fn hess(&self) -> Matrix2<f64> {
        let c = &self.0;
        Matrix2::new(2.0 * c[3], c[4], c[4], 2.0 * c[5])
    }
}

fn monomials(x: &Point2<f64>) -> Vector6<f64> {
    Vector6::new(1.0, x.x, x.y, x.x * x.x, x.x * x.y, x.y * x.y)
}

/// Global Lagrange basis of one cell obtained by inverting the Vandermonde matrix.
fn lagrange_basis(nodes: &[Point2<f64>; 6]) -> [Quadratic; 6] {
    let v = Matrix6::from_fn(|i, j| monomials(&nodes[i])[j]);
    let inv = v.try_inverse().unwrap();
    std::array::from_fn(|k| Quadratic(inv.column(k).into_owned()))
}

#[test]
fn vms_terms_match_naive_oracle() {
    let fes = rectangle(3, 2);
    let (nu, dt) = (0.05, 0.02);
    let force = BodyForce::field(|x, t| Vector2::new(x.y * (1.0 + t), -x.x));
    let mut p = params(nu, dt);
    p.force = force.clone();
    let ops = OperatorSet::assemble(fes.clone(), &p);
    let t = 0.3;

    let ux = Quadratic(Vector6::new(0.3, 1.0, -0.5, 0.7, 0.2, -0.4));
    let uy = Quadratic(Vector6::new(-0.1, 0.4, 0.9, -0.3, 0.6, 0.25));
    let vx = Quadratic(Vector6::new(0.2, 0.1, -0.2, 0.5, 0.0, 0.1));
    let vy = Quadratic(Vector6::new(0.0, -0.3, 0.3, 0.1, 0.2, -0.6));
    let pg = Vector2::new(0.8, -1.3);
    let u = fes.interpolate_velocity(|x| Vector2::new(ux.value(x), uy.value(x)));
    let u_prev = fes.interpolate_velocity(|x| Vector2::new(vx.value(x), vy.value(x)));
    let pr = fes.interpolate_pressure(|x| 0.4 + pg.dot(&x.coords));
    let tau = StabilizationField::for_operators(&ops, &u);
    let terms = assemble_vms(&ops, &u, &pr, &u_prev, t, &tau);

    let nv = fes.n_velocity();
    let mut d = [
        DVector::zeros(nv),
        DVector::zeros(nv),
        DVector::zeros(nv),
        DVector::zeros(nv),
    ];
    let mut e = DVector::zeros(fes.n_pressure());
    let mesh = fes.mesh();
    let rule = fes.quadrature();
    for cell in 0..fes.n_cells() {
        let [a, b, c] = mesh.cells()[cell];
        let v = [mesh.vertices()[a], mesh.vertices()[b], mesh.vertices()[c]];
        let mid = |i: usize, j: usize| Point2::from((v[i].coords + v[j].coords) * 0.5);
        let nodes = [v[0], v[1], v[2], mid(0, 1), mid(1, 2), mid(2, 0)];
        let basis = lagrange_basis(&nodes);
        let e1 = v[1] - v[0];
        let e2 = v[2] - v[0];
        let area2 = (e1.x * e2.y - e1.y * e2.x).abs();
        let jinv = Matrix2::from_columns(&[e1, e2]).try_inverse().unwrap();
        let metric_g = jinv.transpose() * jinv;
        let metric_vec = jinv.transpose() * Vector2::new(1.0, 1.0);
        // P1 gradients from barycentric coordinates.
        let p1_grad = [
            -(jinv.row(0).transpose() + jinv.row(1).transpose()),
            jinv.row(0).transpose(),
            jinv.row(1).transpose(),
        ];
        let gnodes = fes.cell_nodes(cell);
        for (q, xi) in rule.points.iter().enumerate() {
            let x = Point2::from(v[0].coords + e1 * xi.x + e2 * xi.y);
            let w = rule.weights[q] * area2;
            let uq = Vector2::new(ux.value(&x), uy.value(&x));
            let grad_u = Matrix2::from_rows(&[ux.grad(&x).transpose(), uy.grad(&x).transpose()]);
            let div = grad_u.trace();
            let (hx, hy) = (ux.hess(), uy.hess());
            let lap = Vector2::new(hx.trace(), hy.trace());
            let grad_div = Vector2::new(hx[(0, 0)] + hy[(1, 0)], hx[(0, 1)] + hy[(1, 1)]);
            let uprev = Vector2::new(vx.value(&x), vy.value(&x));
            let r = (uq - uprev) / dt + grad_u * uq + uq * div - (lap + grad_div) * nu + pg
                - force.eval(&x, t);
            let tm = (4.0 / (dt * dt)
                + uq.dot(&(metric_g * uq))
                + 36.0 * nu * nu * metric_g.norm_squared())
            .powf(-0.5);
            let tc = 1.0 / (tm * metric_vec.norm_squared());
            for k in 0..6 {
                let gk = basis[k].grad(&x);
                for comp in 0..2 {
                    // grad(e_comp phi_k) = e_comp (x) grad phi_k
                    let mut gphi = Matrix2::zeros();
                    gphi.set_row(comp, &gk.transpose());
                    let dof = 2 * gnodes[k] + comp;
                    d[0][dof] += w * tm * gphi.dot(&(r * uq.transpose()));
                    d[1][dof] += w * tm * gphi.dot(&(uq * r.transpose()));
                    d[2][dof] -= w * tm * tm * gphi.dot(&(r * r.transpose()));
                    d[3][dof] += w * tc * div * gphi.trace();
                }
            }
            for l in 0..3 {
                e[[a, b, c][l]] += w * tm * p1_grad[l].dot(&r);
            }
        }
    }
    let got = [
        &terms.cross_residual_velocity,
        &terms.cross_velocity_residual,
        &terms.quadratic,
        &terms.grad_div,
    ];
    for (g, o) in got.iter().zip(&d) {
        assert!(
            (*g - o).amax() <= 1e-10 * o.amax().max(1e-300),
            "{} vs {}",
            g.amax(),
            o.amax()
        );
    }
    assert!((&terms.continuity - &e).amax() <= 1e-10 * e.amax());
}

#[test]
fn tau_scaling_homogeneity() {
    let fes = rectangle(3, 2);
    let ops = OperatorSet::assemble(fes.clone(), &params(0.02, 0.01));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let u = random_vec(&mut rng, fes.n_velocity(), 1.0);
    let up = random_vec(&mut rng, fes.n_velocity(), 1.0);
    let p = random_vec(&mut rng, fes.n_pressure(), 1.0);
    let tau = StabilizationField::for_operators(&ops, &u);
    let base = assemble_vms(&ops, &u, &p, &up, 0.0, &tau);
    let doubled = assemble_vms(&ops, &u, &p, &up, 0.0, &tau.with_scaled_tau_m(2.0));
    let close = |a: &DVector<f64>, b: &DVector<f64>| (a - b).amax() <= 1e-12 * b.amax();
    assert!(close(
        &doubled.cross_residual_velocity,
        &(&base.cross_residual_velocity * 2.0)
    ));
    assert!(close(
        &doubled.cross_velocity_residual,
        &(&base.cross_velocity_residual * 2.0)
    ));
    assert!(close(&doubled.quadratic, &(&base.quadratic * 4.0)));
    assert!(close(&doubled.continuity, &(&base.continuity * 2.0)));
    assert!(close(&doubled.grad_div, &base.grad_div));
}

#[test]
fn fused_kernel_matches_separate_assembly() {
    let fes = rectangle(3, 3);
    let ops = OperatorSet::assemble(fes.clone(), &params(0.01, 0.02));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let u = random_vec(&mut rng, fes.n_velocity(), 1.0);
    let up = random_vec(&mut rng, fes.n_velocity(), 1.0);
    let p = random_vec(&mut rng, fes.n_pressure(), 1.0);
    let tau = StabilizationField::for_operators(&ops, &u);
    let opts = NonlinearOptions {
        vms: true,
        jacobian: false,
    };
    let nl = ops.nonlinear(&u, &p, &up, 0.0, &tau, opts);
    let terms = assemble_vms(&ops, &u, &p, &up, 0.0, &tau);
    let expected_u = convection_vector(&ops, &u) + terms.momentum();
    assert!((&nl.velocity - &expected_u).amax() < 1e-11 * expected_u.amax());
    assert!((&nl.pressure + &terms.continuity).amax() < 1e-11 * terms.continuity.amax());
}

fn full_residual(
    ops: &OperatorSet,
    x: &DVector<f64>,
    u_prev: &DVector<f64>,
    tau: &StabilizationField,
    vms: bool,
) -> DVector<f64> {
    let nv = ops.n_velocity();
    let u = x.rows(0, nv).into_owned();
    let p = x.rows(nv, ops.n_pressure()).into_owned();
    let (lu, lp) = ops.linear_residual(&u, &p, u_prev, 0.0);
    let nl = ops.nonlinear(
        &u,
        &p,
        u_prev,
        0.0,
        tau,
        NonlinearOptions {
            vms,
            jacobian: false,
        },
    );
    let mut r = DVector::zeros(x.len());
    r.rows_mut(0, nv).copy_from(&(lu + nl.velocity));
    r.rows_mut(nv, ops.n_pressure())
        .copy_from(&(lp + nl.pressure));
    r
}

#[test]
fn jacobian_matches_finite_differences() {
    let fes = rectangle(3, 2);
    let ops = OperatorSet::assemble(fes.clone(), &params(0.01, 0.05));
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let n = fes.n_velocity() + fes.n_pressure();
    let x = random_vec(&mut rng, n, 1.0);
    let up = random_vec(&mut rng, fes.n_velocity(), 1.0);
    let u = x.rows(0, fes.n_velocity()).into_owned();
    let tau = StabilizationField::for_operators(&ops, &u);
    for vms in [false, true] {
        let nl = ops.nonlinear(
            &u,
            &x.rows(fes.n_velocity(), fes.n_pressure()).into_owned(),
            &up,
            0.0,
            &tau,
            NonlinearOptions {
                vms,
                jacobian: true,
            },
        );
        let mut jac = ops.linear_saddle();
        jac.axpy(1.0, nl.jacobian.as_ref().unwrap());
        for _ in 0..4 {
            let dir = random_vec(&mut rng, n, 1.0);
            let h = 1e-6;
            let fd = (full_residual(&ops, &(&x + &dir * h), &up, &tau, vms)
                - full_residual(&ops, &(&x - &dir * h), &up, &tau, vms))
                / (2.0 * h);
            let jv = jac.mul_vec(&dir);
            let rel = (&jv - &fd).norm() / fd.norm();
            assert!(rel < 1e-5, "vms={vms}: relative error {rel:e}");
        }
    }
}

#[test]
fn linear_saddle_matches_linear_residual() {
    let fes = rectangle(2, 2);
    let ops = OperatorSet::assemble(fes.clone(), &params(0.1, 0.05));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let nv = fes.n_velocity();
    let np = fes.n_pressure();
    let x = random_vec(&mut rng, nv + np, 1.0);
    let zero = DVector::zeros(nv);
    let (ru, rp) = ops.linear_residual(
        &x.rows(0, nv).into_owned(),
        &x.rows(nv, np).into_owned(),
        &zero,
        0.0,
    );
    let jx = ops.linear_saddle().mul_vec(&x);
    assert!((jx.rows(0, nv) - ru).amax() < 1e-12);
    assert!((jx.rows(nv, np) - rp).amax() < 1e-12);
}

#[test]
fn forcing_integrates_constant_field() {
    let fes = rectangle(3, 2);
    let mut p = params(0.1, 0.1);
    p.force = BodyForce::field(|_, t| Vector2::new(2.0 * t, -1.0));
    let ops = OperatorSet::assemble(fes.clone(), &p);
    let f = ops.forcing(0.5);
    let ex = fes.interpolate_velocity(|_| Vector2::new(1.0, 0.0));
    let ey = fes.interpolate_velocity(|_| Vector2::new(0.0, 1.0));
    assert!((f.dot(&ex) - 2.0).abs() < 1e-13);
    assert!((f.dot(&ey) + 2.0).abs() < 1e-13);
}

#[test]
fn reference_triangle_p1_stiffness() {
    let fes = reference_triangle();
    let k = assemble_p1_stiffness(&fes).to_dense();
    let expected =
        DMatrix::from_row_slice(3, 3, &[2.0, -1.0, -1.0, -1.0, 1.0, 0.0, -1.0, 0.0, 1.0]) / 2.0;
    assert!((k - expected).amax() < 1e-15);
}

#[test]
fn zero_forcing_gives_zero_load() {
    let ops = OperatorSet::assemble(rectangle(2, 2), &params(0.1, 0.1));
    assert_eq!(ops.forcing(0.7).amax(), 0.0);
}

#[test]
fn convection_satisfies_integration_by_parts() {
    // (C(u)v, v) = 1/2 (div u, |v|^2) - 1/2 <u.n, |v|^2> + <u.n, |v|^2>_out
    let fes = rectangle(3, 3);
    let ops = OperatorSet::assemble(fes.clone(), &params(0.1, 0.1));
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let u = random_vec(&mut rng, fes.n_velocity(), 1.0);
    let v = random_vec(&mut rng, fes.n_velocity(), 1.0);
    let lhs = assemble_convection(&ops, &u).bilinear(&v, &v);

    let mut volume = 0.0;
    for cell in 0..fes.n_cells() {
        let ul = fes.local_velocity(cell, &u);
        let vl = fes.local_velocity(cell, &v);
        for q in 0..fes.quadrature().len() {
            let b = fes.evaluate_basis(cell, q);
            let uq = crate::discretization::VelocityAtPoint::eval(&b, &ul);
            let vq: Vector2<f64> = (0..6).map(|k| vl[k] * b.p2[k]).sum();
            volume += 0.5 * b.jxw * uq.divergence() * vq.norm_squared();
        }
    }

    let gauss = [
        (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
        (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
        (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
        (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    ];
    let mesh = fes.mesh();
    let mut boundary = 0.0;
    for edge in mesh.boundary() {
        let [a, b] = edge.vertices;
        let cell = (0..mesh.n_cells())
            .find(|&c| mesh.cells()[c].contains(&a) && mesh.cells()[c].contains(&b))
            .unwrap();
        let (xa, xb) = (mesh.vertices()[a], mesh.vertices()[b]);
        let tangent = xb - xa;
        let len = tangent.norm();
        let mut normal = Vector2::new(tangent.y, -tangent.x) / len;
        let centroid: Vector2<f64> = mesh.cells()[cell]
            .iter()
            .map(|&k| mesh.vertices()[k].coords)
            .sum::<Vector2<f64>>()
            / 3.0;
        if normal.dot(&(centroid - xa.coords)) > 0.0 {
            normal = -normal;
        }
        let map = mesh.map(cell);
        let ul = fes.local_velocity(cell, &u);
        let vl = fes.local_velocity(cell, &v);
        let sign = if edge.tag == BoundaryTag::Outlet {
            -1.0
        } else {
            1.0
        };
        for (s, w) in gauss {
            let x = xa.coords + tangent * (0.5 * (s + 1.0));
            let xi = map.inverse * (x - map.origin);
            let bq = fes.evaluate_basis_at(cell, &xi);
            let uq: Vector2<f64> = (0..6).map(|k| ul[k] * bq.p2[k]).sum();
            let vq: Vector2<f64> = (0..6).map(|k| vl[k] * bq.p2[k]).sum();
            boundary += sign * 0.5 * w * 0.5 * len * uq.dot(&normal) * vq.norm_squared();
        }
    }
    let rhs = volume - boundary;
    assert!(
        (lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0),
        "{lhs} vs {rhs}"
    );
}

#[test]
fn vms_terms_do_not_depend_on_cell_order() {
    let base_mesh = build_rectangle_mesh(2.0, 1.0, 3, 2).unwrap();
    let mut cells = base_mesh.cells().to_vec();
    cells.reverse();
    cells.rotate_left(2);
    let shuffled = Mesh::new(
        base_mesh.vertices().to_vec(),
        cells,
        base_mesh.boundary().to_vec(),
    )
    .unwrap();
    let field = |x: &Point2<f64>| Vector2::new(1.0 + x.y * x.x, 0.3 * x.x - x.y * x.y);
    let prev = |x: &Point2<f64>| Vector2::new(0.5 * x.y, x.x);
    let evaluate = |mesh: Mesh| {
        let fes = Arc::new(FeSystem::new(mesh));
        let ops = OperatorSet::assemble(fes.clone(), &params(0.01, 0.02));
        let u = fes.interpolate_velocity(field);
        let up = fes.interpolate_velocity(prev);
        let p = fes.interpolate_pressure(|x| x.x - 2.0 * x.y);
        let tau = StabilizationField::for_operators(&ops, &u);
        let terms = assemble_vms(&ops, &u, &p, &up, 0.0, &tau);
        let key = |x: &Point2<f64>| ((x.x * 1e6).round() as i64, (x.y * 1e6).round() as i64);
        let mut d: Vec<((i64, i64), usize, f64)> = Vec::new();
        let dm = terms.momentum();
        for (n, x) in fes.node_coords().iter().enumerate() {
            for c in 0..2 {
                d.push((key(x), c, dm[2 * n + c]));
            }
        }
        d.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        (d, terms.continuity)
    };
    let (d1, e1) = evaluate(base_mesh.clone());
    let (d2, e2) = evaluate(shuffled);
    for (a, b) in d1.iter().zip(&d2) {
        assert_eq!((a.0, a.1), (b.0, b.1));
        assert!((a.2 - b.2).abs() < 1e-13 * a.2.abs().max(1.0));
    }
    assert!((e1 - e2).amax() < 1e-13);
}

#[test]
fn system_jacobian_combines_linear_and_nonlinear_parts() {
    let fes = rectangle(2, 2);
    let ops = OperatorSet::assemble(fes.clone(), &params(0.02, 0.05));
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let nv = fes.n_velocity();
    let np = fes.n_pressure();
    let x = random_vec(&mut rng, nv + np, 1.0);
    let up = random_vec(&mut rng, nv, 1.0);
    let u = x.rows(0, nv).into_owned();
    let p = x.rows(nv, np).into_owned();
    let eval = ops.system(&u, &p, &up, 0.0, true, true);
    let tau = StabilizationField::for_operators(&ops, &u);
    assert!((&eval.residual - full_residual(&ops, &x, &up, &tau, true)).amax() < 1e-12);
    let dir = random_vec(&mut rng, nv + np, 1.0);
    let h = 1e-6;
    let fd = (full_residual(&ops, &(&x + &dir * h), &up, &tau, true)
        - full_residual(&ops, &(&x - &dir * h), &up, &tau, true))
        / (2.0 * h);
    let jv = eval.jacobian.unwrap().mul_vec(&dir);
    assert!((&jv - &fd).norm() < 1e-6 * fd.norm());
}
