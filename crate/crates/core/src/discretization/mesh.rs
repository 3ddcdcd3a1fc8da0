//! Triangular meshes with tagged boundaries.
//!
//! Cells are stored counter-clockwise together with the affine map from the
//! reference simplex `{(0,0), (1,0), (0,1)}`. Edge topology is derived on
//! construction and is what the P2 space hangs its edge nodes on.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use nalgebra::{Matrix2, Point2, Vector2};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("cannot read mesh file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed input: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: vertex index {index} does not exist")]
    DanglingVertex { line: usize, index: usize },
    #[error("{}cell {cell} is inverted or degenerate (det J = {det:e})", line_prefix(*.line))]
    InvertedCell {
        line: Option<usize>,
        cell: usize,
        det: f64,
    },
    #[error("boundary edge ({0}, {1}) carries no tag")]
    UntaggedBoundaryEdge(usize, usize),
    #[error("{}edge ({v0}, {v1}) is tagged but is not a boundary edge", line_prefix(*.line))]
    NotABoundaryEdge {
        line: Option<usize>,
        v0: usize,
        v1: usize,
    },
    #[error("{}boundary edge ({v0}, {v1}) is tagged more than once", line_prefix(*.line))]
    DuplicateTag {
        line: Option<usize>,
        v0: usize,
        v1: usize,
    },
}

fn line_prefix(line: Option<usize>) -> String {
    line.map(|l| format!("line {l}: ")).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    Inlet,
    Wall,
    Outlet,
}

impl BoundaryTag {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryTag::Inlet => "inlet",
            BoundaryTag::Wall => "wall",
            BoundaryTag::Outlet => "outlet",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "inlet" => Some(BoundaryTag::Inlet),
            "wall" => Some(BoundaryTag::Wall),
            "outlet" => Some(BoundaryTag::Outlet),
            _ => None,
        }
    }
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
}

/// Affine map `x = origin + jacobian * xi` from the reference simplex onto a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub origin: Vector2<f64>,
    pub jacobian: Matrix2<f64>,
    pub inverse: Matrix2<f64>,
    pub det: f64,
}

impl AffineMap {
    fn from_vertices(a: &Point2<f64>, b: &Point2<f64>, c: &Point2<f64>) -> Self {
        let jacobian = Matrix2::from_columns(&[b - a, c - a]);
        let det = jacobian.determinant();
        // 2x2 inverse written out so that degenerate cells yield infinities instead of a panic
        let inverse = Matrix2::new(
            jacobian[(1, 1)],
            -jacobian[(0, 1)],
            -jacobian[(1, 0)],
            jacobian[(0, 0)],
        ) / det;
        AffineMap {
            origin: a.coords,
            jacobian,
            inverse,
            det,
        }
    }

    pub fn map(&self, xi: &Vector2<f64>) -> Vector2<f64> {
        self.origin + self.jacobian * xi
    }

    pub fn area(&self) -> f64 {
        0.5 * self.det.abs()
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point2<f64>>,
    cells: Vec<[usize; 3]>,
    boundary: Vec<BoundaryEdge>,
    maps: Vec<AffineMap>,
    /// Unique edges as sorted vertex pairs, numbered in order of first appearance.
    edges: Vec<[usize; 2]>,
    /// Local edge `k` of a cell joins local vertices `k` and `(k + 1) % 3`.
    cell_edges: Vec<[usize; 3]>,
}

/// Optional source line numbers used to name the offending line in errors.
#[derive(Default)]
struct SourceLines {
    cells: Vec<usize>,
    boundary: Vec<usize>,
}

impl Mesh {
    /// Builds a mesh and checks orientation, index ranges and boundary tagging.
    pub fn new(
        vertices: Vec<Point2<f64>>,
        cells: Vec<[usize; 3]>,
        boundary: Vec<BoundaryEdge>,
    ) -> Result<Self, MeshError> {
        Self::build(vertices, cells, boundary, SourceLines::default())
    }

    fn build(
        vertices: Vec<Point2<f64>>,
        cells: Vec<[usize; 3]>,
        boundary: Vec<BoundaryEdge>,
        lines: SourceLines,
    ) -> Result<Self, MeshError> {
        let nv = vertices.len();
        for (k, cell) in cells.iter().enumerate() {
            for &v in cell {
                if v >= nv {
                    return Err(MeshError::DanglingVertex {
                        line: lines.cells.get(k).copied().unwrap_or(0),
                        index: v,
                    });
                }
            }
        }
        for (k, e) in boundary.iter().enumerate() {
            for &v in &e.vertices {
                if v >= nv {
                    return Err(MeshError::DanglingVertex {
                        line: lines.boundary.get(k).copied().unwrap_or(0),
                        index: v,
                    });
                }
            }
        }

        let mut maps = Vec::with_capacity(cells.len());
        for (k, c) in cells.iter().enumerate() {
            let map = AffineMap::from_vertices(&vertices[c[0]], &vertices[c[1]], &vertices[c[2]]);
            if !(map.det > 0.0) || !map.det.is_finite() {
                return Err(MeshError::InvertedCell {
                    line: lines.cells.get(k).copied(),
                    cell: k,
                    det: map.det,
                });
            }
            maps.push(map);
        }

        let mut edge_index: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_cells: Vec<u32> = Vec::new();
        let mut cell_edges = Vec::with_capacity(cells.len());
        for c in &cells {
            let mut local = [0usize; 3];
            for k in 0..3 {
                let key = sorted_pair(c[k], c[(k + 1) % 3]);
                let id = *edge_index.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edge_cells.push(0);
                    edges.len() - 1
                });
                edge_cells[id] += 1;
                local[k] = id;
            }
            cell_edges.push(local);
        }

        let mut tagged = vec![false; edges.len()];
        for (k, e) in boundary.iter().enumerate() {
            let key = sorted_pair(e.vertices[0], e.vertices[1]);
            let line = lines.boundary.get(k).copied();
            match edge_index.get(&key) {
                Some(&id) if edge_cells[id] == 1 => {
                    if tagged[id] {
                        return Err(MeshError::DuplicateTag {
                            line,
                            v0: key[0],
                            v1: key[1],
                        });
                    }
                    tagged[id] = true;
                }
                _ => {
                    return Err(MeshError::NotABoundaryEdge {
                        line,
                        v0: key[0],
                        v1: key[1],
                    })
                }
            }
        }
        for (id, &count) in edge_cells.iter().enumerate() {
            if count == 1 && !tagged[id] {
                return Err(MeshError::UntaggedBoundaryEdge(edges[id][0], edges[id][1]));
            }
        }

        Ok(Mesh {
            vertices,
            cells,
            boundary,
            maps,
            edges,
            cell_edges,
        })
    }

    pub fn vertices(&self) -> &[Point2<f64>] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn boundary(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn cell_edges(&self) -> &[[usize; 3]] {
        &self.cell_edges
    }

    pub fn map(&self, cell: usize) -> &AffineMap {
        &self.maps[cell]
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_tag(&self, tag: BoundaryTag) -> bool {
        self.boundary.iter().any(|e| e.tag == tag)
    }

    pub fn total_area(&self) -> f64 {
        self.maps.iter().map(AffineMap::area).sum()
    }

    /// Length of the bounding-box diagonal.
    pub fn diameter(&self) -> f64 {
        let (mut lo, mut hi) = (
            Vector2::repeat(f64::INFINITY),
            Vector2::repeat(f64::NEG_INFINITY),
        );
        for v in &self.vertices {
            lo = lo.inf(&v.coords);
            hi = hi.sup(&v.coords);
        }
        (hi - lo).norm()
    }

    /// Polygon area enclosed by the boundary edges, oriented by the adjacent cells.
    ///
    /// Holes contribute negatively, so this matches [`Mesh::total_area`] for a valid mesh.
    pub fn boundary_polygon_area(&self) -> f64 {
        let mut oriented: HashMap<[usize; 2], [usize; 2]> = HashMap::new();
        for c in &self.cells {
            for k in 0..3 {
                let (a, b) = (c[k], c[(k + 1) % 3]);
                oriented.insert(sorted_pair(a, b), [a, b]);
            }
        }
        self.boundary
            .iter()
            .map(|e| {
                let [a, b] = oriented[&sorted_pair(e.vertices[0], e.vertices[1])];
                let (p, q) = (&self.vertices[a], &self.vertices[b]);
                0.5 * (p.x * q.y - q.x * p.y)
            })
            .sum()
    }

    /// Stable 64-bit fingerprint of geometry, connectivity and tags.
    pub fn checksum(&self) -> u64 {
        let mut h = Sha256::new();
        h.update((self.vertices.len() as u64).to_le_bytes());
        for v in &self.vertices {
            h.update(v.x.to_le_bytes());
            h.update(v.y.to_le_bytes());
        }
        h.update((self.cells.len() as u64).to_le_bytes());
        for c in &self.cells {
            for &v in c {
                h.update((v as u64).to_le_bytes());
            }
        }
        h.update((self.boundary.len() as u64).to_le_bytes());
        for e in &self.boundary {
            h.update((e.vertices[0] as u64).to_le_bytes());
            h.update((e.vertices[1] as u64).to_le_bytes());
            h.update([e.tag as u8]);
        }
        let digest = h.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes)
    }

    /// Retags every boundary edge satisfying `pred`.
    pub fn retag(
        mut self,
        mut pred: impl FnMut(&Point2<f64>, &Point2<f64>) -> Option<BoundaryTag>,
    ) -> Self {
        for e in &mut self.boundary {
            if let Some(tag) = pred(&self.vertices[e.vertices[0]], &self.vertices[e.vertices[1]]) {
                e.tag = tag;
            }
        }
        self
    }

    /// Serializes to the line-oriented ASCII mesh format.
    pub fn to_ascii(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        writeln!(s, "$vertices\n{}", self.vertices.len()).unwrap();
        for (i, v) in self.vertices.iter().enumerate() {
            writeln!(s, "{i} {:?} {:?}", v.x, v.y).unwrap();
        }
        writeln!(s, "$cells\n{}", self.cells.len()).unwrap();
        for (i, c) in self.cells.iter().enumerate() {
            writeln!(s, "{i} {} {} {}", c[0], c[1], c[2]).unwrap();
        }
        writeln!(s, "$boundary\n{}", self.boundary.len()).unwrap();
        for e in &self.boundary {
            writeln!(s, "{} {} {}", e.vertices[0], e.vertices[1], e.tag).unwrap();
        }
        s
    }

    /// Parses the ASCII mesh format.
    pub fn from_ascii(text: &str) -> Result<Self, MeshError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let mut last_line = 0;
        let mut next = |expect: &str| -> Result<(usize, &str), MeshError> {
            match lines.next() {
                Some((n, l)) => {
                    last_line = n;
                    Ok((n, l))
                }
                None => Err(MeshError::Malformed {
                    line: last_line + 1,
                    reason: format!("unexpected end of file, expected {expect}"),
                }),
            }
        };

        fn section<'a>(
            next: &mut impl FnMut(&str) -> Result<(usize, &'a str), MeshError>,
            name: &str,
        ) -> Result<usize, MeshError> {
            let (n, l) = next(name)?;
            if l != name {
                return Err(MeshError::Malformed {
                    line: n,
                    reason: format!("expected section header {name}, found {l:?}"),
                });
            }
            let (n, l) = next("an entry count")?;
            l.parse::<usize>().map_err(|_| MeshError::Malformed {
                line: n,
                reason: format!("expected an entry count, found {l:?}"),
            })
        }

        fn fields<'a>(n: usize, l: &'a str, expected: usize) -> Result<Vec<&'a str>, MeshError> {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != expected {
                return Err(MeshError::Malformed {
                    line: n,
                    reason: format!("expected {expected} fields, found {}", f.len()),
                });
            }
            Ok(f)
        }

        fn num<T: std::str::FromStr>(n: usize, s: &str) -> Result<T, MeshError> {
            s.parse().map_err(|_| MeshError::Malformed {
                line: n,
                reason: format!("cannot parse {s:?}"),
            })
        }

        fn check_id(n: usize, id: usize, expected: usize) -> Result<(), MeshError> {
            if id != expected {
                return Err(MeshError::Malformed {
                    line: n,
                    reason: format!(
                        "ids must be 0-based and contiguous: expected {expected}, found {id}"
                    ),
                });
            }
            Ok(())
        }

        let nv = section(&mut next, "$vertices")?;
        let mut vertices = Vec::with_capacity(nv);
        for k in 0..nv {
            let (n, l) = next("a vertex line")?;
            let f = fields(n, l, 3)?;
            check_id(n, num(n, f[0])?, k)?;
            let (x, y): (f64, f64) = (num(n, f[1])?, num(n, f[2])?);
            if !x.is_finite() || !y.is_finite() {
                return Err(MeshError::Malformed {
                    line: n,
                    reason: "non-finite coordinate".into(),
                });
            }
            vertices.push(Point2::new(x, y));
        }

        let nc = section(&mut next, "$cells")?;
        let mut cells = Vec::with_capacity(nc);
        let mut src = SourceLines::default();
        for k in 0..nc {
            let (n, l) = next("a cell line")?;
            let f = fields(n, l, 4)?;
            check_id(n, num(n, f[0])?, k)?;
            let c = [num(n, f[1])?, num(n, f[2])?, num(n, f[3])?];
            if let Some(&bad) = c.iter().find(|&&v| v >= nv) {
                return Err(MeshError::DanglingVertex {
                    line: n,
                    index: bad,
                });
            }
            cells.push(c);
            src.cells.push(n);
        }

        let nb = section(&mut next, "$boundary")?;
        let mut boundary = Vec::with_capacity(nb);
        for _ in 0..nb {
            let (n, l) = next("a boundary line")?;
            let f = fields(n, l, 3)?;
            let v = [num(n, f[0])?, num(n, f[1])?];
            if let Some(&bad) = v.iter().find(|&&v| v >= nv) {
                return Err(MeshError::DanglingVertex {
                    line: n,
                    index: bad,
                });
            }
            let tag = BoundaryTag::parse(f[2]).ok_or_else(|| MeshError::Malformed {
                line: n,
                reason: format!("unknown boundary tag {:?}", f[2]),
            })?;
            boundary.push(BoundaryEdge { vertices: v, tag });
            src.boundary.push(n);
        }
        if let Some((n, l)) = lines.next() {
            return Err(MeshError::Malformed {
                line: n,
                reason: format!("trailing content {l:?}"),
            });
        }

        Self::build(vertices, cells, boundary, src)
    }
}

fn sorted_pair(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

/// Structured crossed-triangle mesh of `[0, width] x [0, height]`.
///
/// Diagonals alternate in a checkerboard so every interior vertex is shared by
/// symmetric fans. Left edge is tagged inlet, right edge outlet, top and bottom wall.
pub fn build_rectangle_mesh(
    width: f64,
    height: f64,
    nx: usize,
    ny: usize,
) -> Result<Mesh, MeshError> {
    if !(width > 0.0) || !(height > 0.0) || !width.is_finite() || !height.is_finite() {
        return Err(MeshError::InvalidArgument(format!(
            "rectangle dimensions must be positive, got {width} x {height}"
        )));
    }
    if nx == 0 || ny == 0 {
        return Err(MeshError::InvalidArgument(format!(
            "subdivisions must be at least 1, got {nx} x {ny}"
        )));
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Point2::new(
                width * i as f64 / nx as f64,
                height * j as f64 / ny as f64,
            ));
        }
    }
    let mut cells = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            if (i + j) % 2 == 0 {
                cells.push([a, b, c]);
                cells.push([a, c, d]);
            } else {
                cells.push([a, b, d]);
                cells.push([b, c, d]);
            }
        }
    }
    let mut boundary = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        boundary.push(BoundaryEdge {
            vertices: [id(i, 0), id(i + 1, 0)],
            tag: BoundaryTag::Wall,
        });
    }
    for j in 0..ny {
        boundary.push(BoundaryEdge {
            vertices: [id(nx, j), id(nx, j + 1)],
            tag: BoundaryTag::Outlet,
        });
    }
    for i in (0..nx).rev() {
        boundary.push(BoundaryEdge {
            vertices: [id(i + 1, ny), id(i, ny)],
            tag: BoundaryTag::Wall,
        });
    }
    for j in (0..ny).rev() {
        boundary.push(BoundaryEdge {
            vertices: [id(0, j + 1), id(0, j)],
            tag: BoundaryTag::Inlet,
        });
    }
    Mesh::new(vertices, cells, boundary)
}

/// Reads a mesh from the ASCII format on disk.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh, MeshError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Mesh::from_ascii(&text)
}
