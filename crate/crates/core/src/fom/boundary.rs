//! Dirichlet data on inlet and wall nodes.

use nalgebra::{DVector, Point2, Vector2};

use super::FomError;
use crate::discretization::{BoundaryTag, FeSystem, NodeKind};

/// Velocity prescribed on Dirichlet nodes.
pub trait BoundaryData: Send + Sync {
    fn velocity(&self, x: &Point2<f64>, kind: NodeKind, t: f64) -> Vector2<f64>;
}

/// Parabolic inflow `u_x = 4 U y'(1 - y')` across a straight vertical inlet, no-slip walls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParabolicInlet {
    pub peak: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl ParabolicInlet {
    pub fn new(fes: &FeSystem, peak: f64) -> Result<Self, FomError> {
        let mesh = fes.mesh();
        let pts: Vec<Point2<f64>> = mesh
            .boundary()
            .iter()
            .filter(|e| e.tag == BoundaryTag::Inlet)
            .flat_map(|e| e.vertices.map(|v| mesh.vertices()[v]))
            .collect();
        if pts.is_empty() {
            return Err(FomError::UnsupportedGeometry(
                "mesh has no inlet edges".into(),
            ));
        }
        let x0 = pts[0].x;
        let tol = 1e-9 * mesh.diameter();
        if let Some(p) = pts.iter().find(|p| (p.x - x0).abs() > tol) {
            return Err(FomError::UnsupportedGeometry(format!(
                "inlet is not a straight vertical segment: x = {} and x = {}",
                x0, p.x
            )));
        }
        let y_min = pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let y_max = pts.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        Ok(ParabolicInlet { peak, y_min, y_max })
    }

    pub fn profile(&self, y: f64) -> f64 {
        let s = ((y - self.y_min) / (self.y_max - self.y_min)).clamp(0.0, 1.0);
        4.0 * self.peak * s * (1.0 - s)
    }
}

impl BoundaryData for ParabolicInlet {
    fn velocity(&self, x: &Point2<f64>, kind: NodeKind, _t: f64) -> Vector2<f64> {
        match kind {
            NodeKind::Inlet => Vector2::new(self.profile(x.y), 0.0),
            _ => Vector2::zeros(),
        }
    }
}

/// Dirichlet data given by a closure of position and time, used on every Dirichlet node.
pub struct FnBoundary<F>(pub F);

impl<F> BoundaryData for FnBoundary<F>
where
    F: Fn(&Point2<f64>, f64) -> Vector2<f64> + Send + Sync,
{
    fn velocity(&self, x: &Point2<f64>, _kind: NodeKind, t: f64) -> Vector2<f64> {
        (self.0)(x, t)
    }
}

/// Homogeneous data everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoSlip;

impl BoundaryData for NoSlip {
    fn velocity(&self, _x: &Point2<f64>, _kind: NodeKind, _t: f64) -> Vector2<f64> {
        Vector2::zeros()
    }
}

/// Full-length vector holding `scale * g(t)` on Dirichlet dofs and zero elsewhere.
pub fn dirichlet_vector(
    fes: &FeSystem,
    data: &dyn BoundaryData,
    t: f64,
    scale: f64,
) -> DVector<f64> {
    let mut g = DVector::zeros(fes.n_velocity());
    for (n, x) in fes.node_coords().iter().enumerate() {
        let kind = fes.node_kind(n);
        if kind != NodeKind::Free {
            let v = data.velocity(x, kind, t) * scale;
            g[2 * n] = v.x;
            g[2 * n + 1] = v.y;
        }
    }
    g
}
