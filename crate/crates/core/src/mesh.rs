//! Conforming triangulations of the benchmark domains.
//!
//! Meshes are built once and then shared read-only (usually behind an `Arc`).
//! Triangles are stored counterclockwise; boundary edges carry a marker that
//! the boundary-condition code keys on.

use std::collections::HashMap;

use crate::error::{invalid, Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryMarker {
    Wall,
    Inflow,
    Outflow,
    Bottom,
    Top,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    pub fn unit() -> Self {
        Rect::new(0.0, 1.0, 0.0, 1.0)
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub marker: BoundaryMarker,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// `(master, slave)` vertex pairs identified by a periodic boundary.
    pub periodic_pairs: Vec<(usize, usize)>,
}

impl Mesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.signed_area(t)).sum()
    }

    /// Unique undirected edges, in order of first appearance.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut seen = HashMap::new();
        let mut edges = Vec::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let key = sorted_pair(tri[k], tri[(k + 1) % 3]);
                seen.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edges.len() - 1
                });
            }
        }
        edges
    }

    /// `V - E + F` with `F` the number of triangles.
    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.edges().len() as i64 + self.num_triangles() as i64
    }

    pub fn is_periodic(&self) -> bool {
        !self.periodic_pairs.is_empty()
    }

    /// Checks orientation, conformity and boundary-edge consistency.
    pub fn validate(&self) -> Result<()> {
        for t in 0..self.num_triangles() {
            if self.signed_area(t) <= 0.0 {
                return Err(Error::Topology(format!("triangle {t} has non-positive area")));
            }
        }
        let mut count: HashMap<[usize; 2], usize> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                *count.entry(sorted_pair(tri[k], tri[(k + 1) % 3])).or_default() += 1;
            }
        }
        if let Some((e, n)) = count.iter().find(|(_, &n)| n > 2) {
            return Err(Error::Topology(format!("edge {e:?} shared by {n} triangles")));
        }
        for be in &self.boundary_edges {
            let key = sorted_pair(be.vertices[0], be.vertices[1]);
            if count.get(&key) != Some(&1) {
                return Err(Error::Topology(format!(
                    "boundary edge {key:?} does not belong to exactly one triangle"
                )));
            }
        }
        let open = count.values().filter(|&&n| n == 1).count();
        if open != self.boundary_edges.len() {
            return Err(Error::Topology(format!(
                "{open} open edges but {} marked boundary edges",
                self.boundary_edges.len()
            )));
        }
        Ok(())
    }
}

fn sorted_pair(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

/// Edges that belong to exactly one triangle, oriented as in that triangle.
fn open_edges(triangles: &[[usize; 3]]) -> Vec<[usize; 2]> {
    let mut count: HashMap<[usize; 2], usize> = HashMap::new();
    for tri in triangles {
        for k in 0..3 {
            *count.entry(sorted_pair(tri[k], tri[(k + 1) % 3])).or_default() += 1;
        }
    }
    let mut out = Vec::new();
    for tri in triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            if count[&sorted_pair(a, b)] == 1 {
                out.push([a, b]);
            }
        }
    }
    out
}

/// Structured triangulation of a rectangle; every cell is split along its
/// bottom-left to top-right diagonal.
///
/// Vertex `(i, j)` has index `j * (nx + 1) + i`.
pub fn build_rectangle_mesh(nx: usize, ny: usize, bounds: Rect) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(invalid("rectangle mesh needs at least one cell per direction"));
    }
    if !(bounds.x1 > bounds.x0 && bounds.y1 > bounds.y0) {
        return Err(invalid(format!("degenerate bounds {bounds:?}")));
    }
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([
                lerp(bounds.x0, bounds.x1, i, nx),
                lerp(bounds.y0, bounds.y1, j, ny),
            ]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    let boundary_edges = open_edges(&triangles)
        .into_iter()
        .map(|[a, b]| {
            let (pa, pb) = (vertices[a], vertices[b]);
            let marker = if pa[1] == bounds.y0 && pb[1] == bounds.y0 {
                BoundaryMarker::Bottom
            } else if pa[1] == bounds.y1 && pb[1] == bounds.y1 {
                BoundaryMarker::Top
            } else if pa[0] == bounds.x0 && pb[0] == bounds.x0 {
                BoundaryMarker::Left
            } else {
                BoundaryMarker::Right
            };
            BoundaryEdge { vertices: [a, b], marker }
        })
        .collect();
    Ok(Mesh { vertices, triangles, boundary_edges, periodic_pairs: Vec::new() })
}

// Exact at both ends so that boundary coordinates compare equal.
fn lerp(a: f64, b: f64, i: usize, n: usize) -> f64 {
    if i == n {
        b
    } else {
        a + (b - a) * (i as f64 / n as f64)
    }
}

pub const CHANNEL_LENGTH: f64 = 40.0;
pub const CHANNEL_HEIGHT: f64 = 10.0;
pub const STEP_X0: f64 = 5.0;
pub const STEP_X1: f64 = 6.0;
pub const STEP_HEIGHT: f64 = 1.0;

/// The 40 x 10 channel with the unit step `[5, 6] x [0, 1]` cut out.
///
/// The step is resolved with `ceil(1 / h_target)` cells per unit length, so
/// the actual mesh size is `1 / ceil(1 / h_target)`.
pub fn build_step_channel_mesh(h_target: f64) -> Result<Mesh> {
    if !(h_target > 0.0) {
        return Err(invalid("mesh size must be positive"));
    }
    if h_target > STEP_HEIGHT {
        return Err(invalid(format!("mesh size {h_target} does not resolve the unit step")));
    }
    let per_unit = (1.0 / h_target - 1e-9).ceil() as usize;
    let nx = CHANNEL_LENGTH as usize * per_unit;
    let ny = CHANNEL_HEIGHT as usize * per_unit;
    let full = build_rectangle_mesh(nx, ny, Rect::new(0.0, CHANNEL_LENGTH, 0.0, CHANNEL_HEIGHT))?;

    let (hole_i0, hole_i1) = (STEP_X0 as usize * per_unit, STEP_X1 as usize * per_unit);
    let hole_j1 = STEP_HEIGHT as usize * per_unit;
    let mut triangles = Vec::with_capacity(full.triangles.len());
    for j in 0..ny {
        for i in 0..nx {
            if (hole_i0..hole_i1).contains(&i) && j < hole_j1 {
                continue;
            }
            let cell = 2 * (j * nx + i);
            triangles.push(full.triangles[cell]);
            triangles.push(full.triangles[cell + 1]);
        }
    }

    let mut remap = vec![usize::MAX; full.vertices.len()];
    let mut vertices = Vec::new();
    for tri in &mut triangles {
        for v in tri.iter_mut() {
            if remap[*v] == usize::MAX {
                remap[*v] = vertices.len();
                vertices.push(full.vertices[*v]);
            }
            *v = remap[*v];
        }
    }

    let boundary_edges = open_edges(&triangles)
        .into_iter()
        .map(|[a, b]| {
            let (pa, pb) = (vertices[a], vertices[b]);
            let marker = if pa[0] == 0.0 && pb[0] == 0.0 {
                BoundaryMarker::Inflow
            } else if pa[0] == CHANNEL_LENGTH && pb[0] == CHANNEL_LENGTH {
                BoundaryMarker::Outflow
            } else {
                BoundaryMarker::Wall
            };
            BoundaryEdge { vertices: [a, b], marker }
        })
        .collect();
    Ok(Mesh { vertices, triangles, boundary_edges, periodic_pairs: Vec::new() })
}

/// Pairs the vertices of the two boundary sides normal to `axis`.
///
/// Vertices on the low side become masters. Both sides must carry the same
/// vertex coordinates (up to 1e-12) in the other direction.
pub fn identify_periodic(mesh: &Mesh, axis: Axis) -> Result<Mesh> {
    if mesh.vertices.is_empty() {
        return Err(Error::Topology("empty mesh".into()));
    }
    let a = axis.index();
    let o = 1 - a;
    let lo = mesh.vertices.iter().map(|p| p[a]).fold(f64::INFINITY, f64::min);
    let hi = mesh.vertices.iter().map(|p| p[a]).fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12;

    let mut on_boundary = vec![false; mesh.vertices.len()];
    for be in &mesh.boundary_edges {
        on_boundary[be.vertices[0]] = true;
        on_boundary[be.vertices[1]] = true;
    }
    let side = |target: f64| -> Vec<usize> {
        let mut ids: Vec<usize> = (0..mesh.vertices.len())
            .filter(|&v| on_boundary[v] && (mesh.vertices[v][a] - target).abs() <= tol)
            .collect();
        ids.sort_by(|&p, &q| mesh.vertices[p][o].total_cmp(&mesh.vertices[q][o]));
        ids
    };
    let masters = side(lo);
    let slaves = side(hi);
    if masters.len() != slaves.len() || masters.is_empty() {
        return Err(Error::Topology(format!(
            "periodic sides have {} and {} vertices",
            masters.len(),
            slaves.len()
        )));
    }
    let mut pairs = Vec::with_capacity(masters.len());
    for (&m, &s) in masters.iter().zip(&slaves) {
        if (mesh.vertices[m][o] - mesh.vertices[s][o]).abs() > tol {
            return Err(Error::Topology(format!(
                "periodic vertices {m} and {s} do not match ({:?} vs {:?})",
                mesh.vertices[m], mesh.vertices[s]
            )));
        }
        pairs.push((m, s));
    }
    let mut out = mesh.clone();
    out.periodic_pairs = pairs;
    Ok(out)
}
