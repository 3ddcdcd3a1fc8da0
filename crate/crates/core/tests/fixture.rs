use std::path::Path;

use vmsrom::discretization::{load_mesh, BoundaryTag, Mesh};

fn cylinder() -> Mesh {
    load_mesh(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/cylinder.mesh")).unwrap()
}

#[test]
fn cylinder_fixture_geometry() {
    let mesh = cylinder();
    for tag in [BoundaryTag::Inlet, BoundaryTag::Wall, BoundaryTag::Outlet] {
        assert!(mesh.has_tag(tag), "missing {tag}");
    }
    // polygonal cylinder of radius 0.1 centred at (0, -0.01)
    let hole: Vec<_> = mesh
        .boundary()
        .iter()
        .filter(|e| {
            e.vertices.iter().all(|&v| {
                let p = mesh.vertices()[v];
                (p.x.powi(2) + (p.y + 0.01).powi(2)).sqrt() < 0.2
            })
        })
        .collect();
    assert_eq!(hole.len(), 48);
    assert!(hole.iter().all(|e| e.tag == BoundaryTag::Wall));

    let polygon = 0.5 * 48.0 * 0.1f64.powi(2) * (2.0 * std::f64::consts::PI / 48.0).sin();
    let area = 3.0 - polygon;
    assert!((mesh.total_area() - area).abs() < 1e-12);
    assert!((mesh.boundary_polygon_area() - area).abs() < 1e-12);

    for e in mesh.boundary() {
        let [a, b] = e.vertices.map(|v| mesh.vertices()[v]);
        let expected = if a.x == -0.6 && b.x == -0.6 {
            BoundaryTag::Inlet
        } else if a.x == 2.4 && b.x == 2.4 {
            BoundaryTag::Outlet
        } else {
            BoundaryTag::Wall
        };
        assert_eq!(e.tag, expected);
    }
}

#[test]
fn cylinder_fixture_checksum_is_stable() {
    assert_eq!(cylinder().checksum(), 0x289f_bbe8_9c9e_c7e7);
}
