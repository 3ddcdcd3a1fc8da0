//! Taylor-Hood P2/P1 spaces on a triangular mesh.
//!
//! Scalar P2 nodes are the mesh vertices followed by the edge midpoints.
//! Velocity degrees of freedom interleave components: node `n`, component `c`
//! lives at `2 * n + c`. Pressure degrees of freedom coincide with vertices.

use nalgebra::{DVector, Matrix2, Point2, Vector2};

use super::mesh::{BoundaryTag, Mesh};
use super::quadrature::QuadratureRule;

/// Metric quantities of the inverse affine map `xi(x)` of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMetric {
    /// `G_ij = sum_k dxi_k/dx_i dxi_k/dx_j`
    pub g_tensor: Matrix2<f64>,
    /// `g_i = sum_j dxi_j/dx_i`
    pub g_vector: Vector2<f64>,
    pub g_colon_g: f64,
    pub g_dot_g: f64,
}

impl CellMetric {
    pub fn from_inverse_jacobian(inv: &Matrix2<f64>) -> Self {
        // dxi_k/dx_i = inv[(k, i)]
        let g_tensor = inv.transpose() * inv;
        let g_vector = inv.transpose() * Vector2::new(1.0, 1.0);
        CellMetric {
            g_colon_g: g_tensor.component_mul(&g_tensor).sum(),
            g_dot_g: g_vector.norm_squared(),
            g_tensor,
            g_vector,
        }
    }
}

/// Role of a scalar P2 node with respect to velocity boundary conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Free,
    Inlet,
    Wall,
}

/// Basis functions of one cell pushed forward to one point.
#[derive(Debug, Clone)]
pub struct BasisAtPoint {
    pub x: Point2<f64>,
    /// Quadrature weight times `|det J|`; zero when evaluated off-rule.
    pub jxw: f64,
    pub p2: [f64; 6],
    pub p2_grad: [Vector2<f64>; 6],
    pub p2_hess: [Matrix2<f64>; 6],
    pub p1: [f64; 3],
    pub p1_grad: [Vector2<f64>; 3],
}

#[derive(Debug, Clone)]
struct ReferenceTables {
    p2: Vec<[f64; 6]>,
    p2_grad: Vec<[Vector2<f64>; 6]>,
    p1: Vec<[f64; 3]>,
}

const LAMBDA_GRAD: [Vector2<f64>; 3] = [
    Vector2::new(-1.0, -1.0),
    Vector2::new(1.0, 0.0),
    Vector2::new(0.0, 1.0),
];
/// Local P2 edge nodes 3, 4, 5 sit on edges (0,1), (1,2), (2,0).
const EDGE_VERTS: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

fn barycentric(xi: &Vector2<f64>) -> [f64; 3] {
    [1.0 - xi.x - xi.y, xi.x, xi.y]
}

fn reference_p2(xi: &Vector2<f64>) -> ([f64; 6], [Vector2<f64>; 6]) {
    let l = barycentric(xi);
    let mut v = [0.0; 6];
    let mut g = [Vector2::zeros(); 6];
    for i in 0..3 {
        v[i] = l[i] * (2.0 * l[i] - 1.0);
        g[i] = LAMBDA_GRAD[i] * (4.0 * l[i] - 1.0);
    }
    for (k, &(i, j)) in EDGE_VERTS.iter().enumerate() {
        v[3 + k] = 4.0 * l[i] * l[j];
        g[3 + k] = (LAMBDA_GRAD[i] * l[j] + LAMBDA_GRAD[j] * l[i]) * 4.0;
    }
    (v, g)
}

fn reference_p2_hessians() -> [Matrix2<f64>; 6] {
    let mut h = [Matrix2::zeros(); 6];
    for i in 0..3 {
        h[i] = LAMBDA_GRAD[i] * LAMBDA_GRAD[i].transpose() * 4.0;
    }
    for (k, &(i, j)) in EDGE_VERTS.iter().enumerate() {
        let a = LAMBDA_GRAD[i] * LAMBDA_GRAD[j].transpose();
        h[3 + k] = (a + a.transpose()) * 4.0;
    }
    h
}

#[derive(Debug, Clone)]
pub struct FeSystem {
    mesh: Mesh,
    quadrature: QuadratureRule,
    node_coords: Vec<Point2<f64>>,
    cell_nodes: Vec<[usize; 6]>,
    node_kind: Vec<NodeKind>,
    reference: ReferenceTables,
    ref_hess: [Matrix2<f64>; 6],
}

impl FeSystem {
    pub fn new(mesh: Mesh) -> Self {
        let nv = mesh.n_vertices();
        let mut node_coords: Vec<Point2<f64>> = mesh.vertices().to_vec();
        node_coords.extend(
            mesh.edges()
                .iter()
                .map(|&[a, b]| nalgebra::center(&mesh.vertices()[a], &mesh.vertices()[b])),
        );
        let cell_nodes = mesh
            .cells()
            .iter()
            .zip(mesh.cell_edges())
            .map(|(c, e)| [c[0], c[1], c[2], nv + e[0], nv + e[1], nv + e[2]])
            .collect();

        let mut edge_of = std::collections::HashMap::new();
        for (id, e) in mesh.edges().iter().enumerate() {
            edge_of.insert(*e, id);
        }
        let mut node_kind = vec![NodeKind::Free; node_coords.len()];
        // inlet first so that wall wins at shared corners
        for tag in [BoundaryTag::Inlet, BoundaryTag::Wall] {
            let kind = if tag == BoundaryTag::Inlet {
                NodeKind::Inlet
            } else {
                NodeKind::Wall
            };
            for e in mesh.boundary().iter().filter(|e| e.tag == tag) {
                let [a, b] = e.vertices;
                let key = if a < b { [a, b] } else { [b, a] };
                node_kind[a] = kind;
                node_kind[b] = kind;
                node_kind[nv + edge_of[&key]] = kind;
            }
        }

        let quadrature = QuadratureRule::degree6();
        let mut reference = ReferenceTables {
            p2: Vec::new(),
            p2_grad: Vec::new(),
            p1: Vec::new(),
        };
        for xi in &quadrature.points {
            let (v, g) = reference_p2(xi);
            reference.p2.push(v);
            reference.p2_grad.push(g);
            reference.p1.push(barycentric(xi));
        }

        FeSystem {
            mesh,
            quadrature,
            node_coords,
            cell_nodes,
            node_kind,
            reference,
            ref_hess: reference_p2_hessians(),
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.quadrature
    }

    pub fn n_cells(&self) -> usize {
        self.mesh.n_cells()
    }

    /// Number of scalar P2 nodes.
    pub fn n_nodes(&self) -> usize {
        self.node_coords.len()
    }

    /// Velocity space dimension `M_h`.
    pub fn n_velocity(&self) -> usize {
        2 * self.node_coords.len()
    }

    /// Pressure space dimension `K_h`.
    pub fn n_pressure(&self) -> usize {
        self.mesh.n_vertices()
    }

    pub fn node_coords(&self) -> &[Point2<f64>] {
        &self.node_coords
    }

    pub fn node_kind(&self, node: usize) -> NodeKind {
        self.node_kind[node]
    }

    pub fn cell_nodes(&self, cell: usize) -> &[usize; 6] {
        &self.cell_nodes[cell]
    }

    pub fn cell_vertices(&self, cell: usize) -> &[usize; 3] {
        &self.mesh.cells()[cell]
    }

    /// Global velocity dofs of a cell in local order `2 * local_node + component`.
    pub fn cell_velocity_dofs(&self, cell: usize) -> [usize; 12] {
        let n = &self.cell_nodes[cell];
        std::array::from_fn(|k| 2 * n[k / 2] + k % 2)
    }

    /// Velocity dofs constrained on inlet or wall, ascending.
    pub fn dirichlet_dofs(&self) -> Vec<usize> {
        (0..self.n_velocity())
            .filter(|&d| self.node_kind[d / 2] != NodeKind::Free)
            .collect()
    }

    pub fn dirichlet_mask(&self) -> Vec<bool> {
        (0..self.n_velocity())
            .map(|d| self.node_kind[d / 2] != NodeKind::Free)
            .collect()
    }

    pub fn free_velocity_dofs(&self) -> Vec<usize> {
        (0..self.n_velocity())
            .filter(|&d| self.node_kind[d / 2] == NodeKind::Free)
            .collect()
    }

    /// Boundary edges carrying `tag`, in mesh boundary order.
    pub fn boundary_faces(&self, tag: BoundaryTag) -> Vec<BoundaryFace> {
        let mesh = &self.mesh;
        let nv = mesh.n_vertices();
        let mut owner = std::collections::HashMap::new();
        for (cell, (c, e)) in mesh.cells().iter().zip(mesh.cell_edges()).enumerate() {
            for k in 0..3 {
                let (a, b) = (c[k], c[(k + 1) % 3]);
                owner.insert(if a < b { [a, b] } else { [b, a] }, (cell, e[k]));
            }
        }
        mesh.boundary()
            .iter()
            .filter(|e| e.tag == tag)
            .map(|e| {
                let [a, b] = e.vertices;
                let (cell, edge) = owner[&if a < b { [a, b] } else { [b, a] }];
                let (xa, xb) = (mesh.vertices()[a], mesh.vertices()[b]);
                let d = xb - xa;
                let length = d.norm();
                let mut normal = Vector2::new(d.y, -d.x) / length;
                let inside = mesh.cells()[cell]
                    .iter()
                    .map(|&v| mesh.vertices()[v].coords)
                    .sum::<Vector2<f64>>()
                    / 3.0;
                if normal.dot(&(inside - xa.coords)) > 0.0 {
                    normal = -normal;
                }
                BoundaryFace {
                    nodes: [a, b, nv + edge],
                    normal,
                    length,
                }
            })
            .collect()
    }

    pub fn cell_metric(&self, cell: usize) -> CellMetric {
        CellMetric::from_inverse_jacobian(&self.mesh.map(cell).inverse)
    }

    /// Basis values at quadrature point `q` of `cell`.
    pub fn evaluate_basis(&self, cell: usize, q: usize) -> BasisAtPoint {
        let map = self.mesh.map(cell);
        let xi = &self.quadrature.points[q];
        let mut b = self.push_forward(
            cell,
            xi,
            &self.reference.p2[q],
            &self.reference.p2_grad[q],
            &self.reference.p1[q],
        );
        b.jxw = self.quadrature.weights[q] * map.det.abs();
        b
    }

    /// Basis values at an arbitrary reference point.
    pub fn evaluate_basis_at(&self, cell: usize, xi: &Vector2<f64>) -> BasisAtPoint {
        let (v, g) = reference_p2(xi);
        self.push_forward(cell, xi, &v, &g, &barycentric(xi))
    }

    fn push_forward(
        &self,
        cell: usize,
        xi: &Vector2<f64>,
        p2: &[f64; 6],
        p2_grad_ref: &[Vector2<f64>; 6],
        p1: &[f64; 3],
    ) -> BasisAtPoint {
        let map = self.mesh.map(cell);
        let inv_t = map.inverse.transpose();
        BasisAtPoint {
            x: Point2::from(map.map(xi)),
            jxw: 0.0,
            p2: *p2,
            p2_grad: std::array::from_fn(|k| inv_t * p2_grad_ref[k]),
            p2_hess: std::array::from_fn(|k| inv_t * self.ref_hess[k] * map.inverse),
            p1: *p1,
            p1_grad: std::array::from_fn(|k| inv_t * LAMBDA_GRAD[k]),
        }
    }

    /// Nodal interpolant of a vector field.
    pub fn interpolate_velocity(&self, f: impl Fn(&Point2<f64>) -> Vector2<f64>) -> DVector<f64> {
        let mut u = DVector::zeros(self.n_velocity());
        for (n, x) in self.node_coords.iter().enumerate() {
            let v = f(x);
            u[2 * n] = v.x;
            u[2 * n + 1] = v.y;
        }
        u
    }

    /// Nodal interpolant of a scalar field in the pressure space.
    pub fn interpolate_pressure(&self, f: impl Fn(&Point2<f64>) -> f64) -> DVector<f64> {
        DVector::from_iterator(self.n_pressure(), self.mesh.vertices().iter().map(f))
    }

    /// Gathers local velocity coefficients of `cell` as six 2-vectors.
    pub fn local_velocity(&self, cell: usize, u: &DVector<f64>) -> [Vector2<f64>; 6] {
        let n = &self.cell_nodes[cell];
        std::array::from_fn(|k| Vector2::new(u[2 * n[k]], u[2 * n[k] + 1]))
    }

    pub fn local_pressure(&self, cell: usize, p: &DVector<f64>) -> [f64; 3] {
        let v = self.cell_vertices(cell);
        std::array::from_fn(|k| p[v[k]])
    }
}

/// A boundary edge with its three P2 nodes `[a, b, midpoint]` and outward unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    pub nodes: [usize; 3],
    pub normal: Vector2<f64>,
    pub length: f64,
}

/// Four-point Gauss rule on `[0, 1]`.
const EDGE_GAUSS: [(f64, f64); 4] = [
    (0.069_431_844_202_973_71, 0.173_927_422_568_726_93),
    (0.330_009_478_207_571_87, 0.326_072_577_431_273_07),
    (0.669_990_521_792_428_1, 0.326_072_577_431_273_07),
    (0.930_568_155_797_026_3, 0.173_927_422_568_726_93),
];

impl BoundaryFace {
    /// Quadrature points as `(s, weight * length)` with `s` running from node `a` to `b`.
    pub fn quadrature(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        EDGE_GAUSS.iter().map(move |&(s, w)| (s, w * self.length))
    }

    /// Edge restriction of the P2 basis functions of `nodes` at `s`.
    pub fn basis(s: f64) -> [f64; 3] {
        [
            (1.0 - s) * (1.0 - 2.0 * s),
            s * (2.0 * s - 1.0),
            4.0 * s * (1.0 - s),
        ]
    }
}

/// Values of a P2 vector field and its derivatives at one point.
#[derive(Debug, Clone, Copy)]
pub struct VelocityAtPoint {
    pub value: Vector2<f64>,
    /// `grad[(a, b)] = d u_a / d x_b`
    pub grad: Matrix2<f64>,
    /// `hess[a][(b, c)] = d^2 u_a / d x_b d x_c`
    pub hess: [Matrix2<f64>; 2],
}

impl VelocityAtPoint {
    pub fn eval(basis: &BasisAtPoint, local: &[Vector2<f64>; 6]) -> Self {
        let mut value = Vector2::zeros();
        let mut grad = Matrix2::zeros();
        let mut hess = [Matrix2::zeros(); 2];
        for k in 0..6 {
            value += local[k] * basis.p2[k];
            grad += local[k] * basis.p2_grad[k].transpose();
            hess[0] += basis.p2_hess[k] * local[k].x;
            hess[1] += basis.p2_hess[k] * local[k].y;
        }
        VelocityAtPoint { value, grad, hess }
    }

    pub fn divergence(&self) -> f64 {
        self.grad.trace()
    }

    /// `div(2 nu sym grad u) / nu = laplace(u) + grad(div u)`
    pub fn viscous_operator(&self) -> Vector2<f64> {
        let lap = Vector2::new(self.hess[0].trace(), self.hess[1].trace());
        let grad_div = Vector2::new(
            self.hess[0][(0, 0)] + self.hess[1][(1, 0)],
            self.hess[0][(0, 1)] + self.hess[1][(1, 1)],
        );
        lap + grad_div
    }
}

/// Scalar P1 value and gradient at a point.
pub fn pressure_at(basis: &BasisAtPoint, local: &[f64; 3]) -> (f64, Vector2<f64>) {
    let mut v = 0.0;
    let mut g = Vector2::zeros();
    for k in 0..3 {
        v += basis.p1[k] * local[k];
        g += basis.p1_grad[k] * local[k];
    }
    (v, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::build_rectangle_mesh;

    const REF_NODES: [(f64, f64); 6] = [
        (0.0, 0.0),
        (1.0, 0.0),
        (0.0, 1.0),
        (0.5, 0.0),
        (0.5, 0.5),
        (0.0, 0.5),
    ];

    fn skewed_mesh() -> Mesh {
        let m = build_rectangle_mesh(1.0, 1.0, 3, 2).unwrap();
        let v: Vec<_> = m
            .vertices()
            .iter()
            .map(|p| Point2::new(p.x + 0.15 * p.y * p.y, p.y + 0.1 * p.x))
            .collect();
        Mesh::new(v, m.cells().to_vec(), m.boundary().to_vec()).unwrap()
    }

    #[test]
    fn dof_counts() {
        let m = build_rectangle_mesh(2.0, 1.0, 4, 3).unwrap();
        let (nv, ne) = (m.n_vertices(), m.n_edges());
        let fes = FeSystem::new(m);
        assert_eq!(fes.n_velocity(), 2 * nv + 2 * ne);
        assert_eq!(fes.n_pressure(), nv);
    }

    #[test]
    fn lagrange_property_at_nodes() {
        let fes = FeSystem::new(build_rectangle_mesh(1.0, 1.0, 1, 1).unwrap());
        for (i, &(x, y)) in REF_NODES.iter().enumerate() {
            let b = fes.evaluate_basis_at(0, &Vector2::new(x, y));
            for j in 0..6 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((b.p2[j] - expected).abs() < 1e-15);
            }
            if i < 3 {
                for j in 0..3 {
                    assert_eq!(b.p1[j], if i == j { 1.0 } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn partition_of_unity_and_zero_gradient_sum() {
        let fes = FeSystem::new(skewed_mesh());
        for c in 0..fes.n_cells() {
            for q in 0..fes.quadrature().len() {
                let b = fes.evaluate_basis(c, q);
                assert!((b.p2.iter().sum::<f64>() - 1.0).abs() < 1e-13);
                assert!((b.p1.iter().sum::<f64>() - 1.0).abs() < 1e-13);
                assert!(b.p2_grad.iter().sum::<Vector2<f64>>().norm() < 1e-12);
                assert!(b.p1_grad.iter().sum::<Vector2<f64>>().norm() < 1e-12);
                assert!(b.p2_hess.iter().sum::<Matrix2<f64>>().norm() < 1e-10);
            }
        }
    }

    #[test]
    fn quadrature_measures_cell_area() {
        let fes = FeSystem::new(skewed_mesh());
        for c in 0..fes.n_cells() {
            let area: f64 = (0..fes.quadrature().len())
                .map(|q| fes.evaluate_basis(c, q).jxw)
                .sum();
            let exact = fes.mesh().map(c).det.abs() / 2.0;
            assert!(((area - exact) / exact).abs() < 1e-13);
        }
    }

    #[test]
    fn quadratic_fields_are_reproduced() {
        let fes = FeSystem::new(skewed_mesh());
        let f = |p: &Point2<f64>| {
            Vector2::new(p.x * p.x, 1.0 + 2.0 * p.x * p.y - 0.5 * p.y * p.y + p.x)
        };
        let u = fes.interpolate_velocity(f);
        for c in 0..fes.n_cells() {
            let local = fes.local_velocity(c, &u);
            for q in 0..fes.quadrature().len() {
                let b = fes.evaluate_basis(c, q);
                let v = VelocityAtPoint::eval(&b, &local);
                let (x, y) = (b.x.x, b.x.y);
                assert!((v.value - f(&b.x)).norm() < 1e-12);
                // d(x^2)/dx = 2x, d/dy = 0
                assert!((v.grad[(0, 0)] - 2.0 * x).abs() < 1e-12);
                assert!(v.grad[(0, 1)].abs() < 1e-12);
                assert!((v.grad[(1, 0)] - (2.0 * y + 1.0)).abs() < 1e-12);
                assert!((v.grad[(1, 1)] - (2.0 * x - y)).abs() < 1e-12);
                assert!((v.hess[0] - Matrix2::new(2.0, 0.0, 0.0, 0.0)).norm() < 1e-10);
                assert!((v.hess[1] - Matrix2::new(0.0, 2.0, 2.0, -1.0)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn metric_of_identity_map() {
        let m = CellMetric::from_inverse_jacobian(&Matrix2::identity());
        assert_eq!(m.g_tensor, Matrix2::identity());
        assert_eq!(m.g_colon_g, 2.0);
        assert_eq!(m.g_vector, Vector2::new(1.0, 1.0));
        assert_eq!(m.g_dot_g, 2.0);
    }

    #[test]
    fn metric_scales_with_cell_size() {
        for h in [0.5, 0.25, 0.125, 3.0] {
            let v = vec![
                Point2::new(0.0, 0.0),
                Point2::new(h, 0.0),
                Point2::new(0.0, h),
            ];
            let mesh = Mesh::new(
                v,
                vec![[0, 1, 2]],
                vec![
                    crate::discretization::BoundaryEdge {
                        vertices: [0, 1],
                        tag: BoundaryTag::Wall,
                    },
                    crate::discretization::BoundaryEdge {
                        vertices: [1, 2],
                        tag: BoundaryTag::Outlet,
                    },
                    crate::discretization::BoundaryEdge {
                        vertices: [2, 0],
                        tag: BoundaryTag::Inlet,
                    },
                ],
            )
            .unwrap();
            let m = FeSystem::new(mesh).cell_metric(0);
            let tol = 1e-13 / (h * h * h * h);
            assert!((m.g_tensor - Matrix2::identity() / (h * h)).norm() < tol);
            assert!((m.g_colon_g - 2.0 / h.powi(4)).abs() < tol * 10.0);
            assert!((m.g_dot_g - 2.0 / (h * h)).abs() < tol);
        }
    }

    #[test]
    fn node_classification_prefers_wall_at_corners() {
        let fes = FeSystem::new(build_rectangle_mesh(1.0, 1.0, 2, 2).unwrap());
        // vertex 0 is the bottom-left corner shared by inlet and wall
        assert_eq!(fes.node_kind(0), NodeKind::Wall);
        // vertex 3 is the left midpoint
        assert_eq!(fes.node_kind(3), NodeKind::Inlet);
        assert_eq!(fes.node_kind(4), NodeKind::Free);
        // right midpoint lies on the outlet
        assert_eq!(fes.node_kind(5), NodeKind::Free);
    }
}
