//! Meshes, Taylor-Hood spaces, quadrature and cell metrics.

mod fe;
mod mesh;
mod quadrature;

pub use fe::{
    pressure_at, BasisAtPoint, BoundaryFace, CellMetric, FeSystem, NodeKind, VelocityAtPoint,
};
pub use mesh::{
    build_rectangle_mesh, load_mesh, AffineMap, BoundaryEdge, BoundaryTag, Mesh, MeshError,
};
pub use quadrature::QuadratureRule;
