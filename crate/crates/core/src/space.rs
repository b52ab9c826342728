//! Lagrange P1/P2 spaces, scalar or 2-vector, with periodic identification.
//!
//! Scalar nodes are numbered vertices first, then edge midpoints; periodic
//! slaves share their master's number and are never numbered themselves.
//! Vector spaces interleave components, so dof `2 * node + c` is component
//! `c` at `node`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::mesh::{BoundaryMarker, Mesh, Point};
use crate::quadrature::QuadratureRule;

/// Constant geometric data of one triangle.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub area: f64,
    pub grad_lambda: [[f64; 2]; 3],
}

impl ElementGeometry {
    pub fn new(p: [Point; 3]) -> Self {
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let g = |a: Point, b: Point| [(a[1] - b[1]) / det, (b[0] - a[0]) / det];
        ElementGeometry { area: 0.5 * det, grad_lambda: [g(p[1], p[2]), g(p[2], p[0]), g(p[0], p[1])] }
    }
}

pub(crate) const P2_EDGES: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

/// Number of local scalar basis functions.
pub fn local_count(degree: usize) -> usize {
    if degree == 1 {
        3
    } else {
        6
    }
}

/// Basis values at barycentric point `l`.
pub fn basis_values(degree: usize, l: [f64; 3], out: &mut [f64]) {
    if degree == 1 {
        out[..3].copy_from_slice(&l);
        return;
    }
    for i in 0..3 {
        out[i] = l[i] * (2.0 * l[i] - 1.0);
    }
    for (k, [i, j]) in P2_EDGES.iter().enumerate() {
        out[3 + k] = 4.0 * l[*i] * l[*j];
    }
}

/// Coefficients `c[k][i]` with `grad phi_k = sum_i c[k][i] grad lambda_i`.
pub fn basis_grad_coeffs(degree: usize, l: [f64; 3], out: &mut [[f64; 3]]) {
    if degree == 1 {
        for k in 0..3 {
            out[k] = [0.0; 3];
            out[k][k] = 1.0;
        }
        return;
    }
    for k in 0..3 {
        out[k] = [0.0; 3];
        out[k][k] = 4.0 * l[k] - 1.0;
    }
    for (e, [i, j]) in P2_EDGES.iter().enumerate() {
        let mut c = [0.0; 3];
        c[*i] = 4.0 * l[*j];
        c[*j] = 4.0 * l[*i];
        out[3 + e] = c;
    }
}

/// Basis values and gradient coefficients tabulated at the points of a rule.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub degree: usize,
    pub nloc: usize,
    pub weights: Vec<f64>,
    pub points: Vec<[f64; 3]>,
    /// `values[q * nloc + k]`
    pub values: Vec<f64>,
    /// `grad_coeffs[q * nloc + k]`
    pub grad_coeffs: Vec<[f64; 3]>,
}

impl Tabulation {
    pub fn new(degree: usize, rule: &QuadratureRule) -> Self {
        let nloc = local_count(degree);
        let mut values = vec![0.0; rule.len() * nloc];
        let mut grad_coeffs = vec![[0.0; 3]; rule.len() * nloc];
        for (q, &l) in rule.points.iter().enumerate() {
            basis_values(degree, l, &mut values[q * nloc..(q + 1) * nloc]);
            basis_grad_coeffs(degree, l, &mut grad_coeffs[q * nloc..(q + 1) * nloc]);
        }
        Tabulation { degree, nloc, weights: rule.weights.clone(), points: rule.points.clone(), values, grad_coeffs }
    }

    pub fn num_points(&self) -> usize {
        self.weights.len()
    }

    /// Physical basis gradients at point `q` of an element.
    #[inline]
    pub fn gradients(&self, geo: &ElementGeometry, q: usize, out: &mut [[f64; 2]]) {
        let g = &geo.grad_lambda;
        for k in 0..self.nloc {
            let c = self.grad_coeffs[q * self.nloc + k];
            out[k] = [
                c[0] * g[0][0] + c[1] * g[1][0] + c[2] * g[2][0],
                c[0] * g[0][1] + c[1] * g[1][1] + c[2] * g[2][1],
            ];
        }
    }

    #[inline]
    pub fn value_row(&self, q: usize) -> &[f64] {
        &self.values[q * self.nloc..(q + 1) * self.nloc]
    }
}

#[derive(Debug)]
pub struct FeSpace {
    mesh: Arc<Mesh>,
    degree: usize,
    components: usize,
    num_nodes: usize,
    /// Per triangle: global scalar node of each local basis function.
    cell_nodes: Vec<[usize; 6]>,
    node_coords: Vec<Point>,
    geometry: Vec<ElementGeometry>,
    boundary_nodes: BTreeMap<BoundaryMarker, Vec<usize>>,
    /// Unreduced slave node (vertex or edge id in mesh numbering) to master node.
    periodic_slaves: Vec<(usize, usize)>,
}

impl FeSpace {
    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_dofs(&self) -> usize {
        self.num_nodes * self.components
    }

    pub fn nloc(&self) -> usize {
        local_count(self.degree)
    }

    pub fn num_cells(&self) -> usize {
        self.cell_nodes.len()
    }

    /// Scalar nodes of triangle `t`, in local basis order.
    pub fn cell_nodes(&self, t: usize) -> &[usize] {
        &self.cell_nodes[t][..self.nloc()]
    }

    /// Global dofs of triangle `t`; component-interleaved for vector spaces.
    pub fn cell_dofs(&self, t: usize) -> Vec<usize> {
        let c = self.components;
        self.cell_nodes(t).iter().flat_map(|&n| (0..c).map(move |k| c * n + k)).collect()
    }

    pub fn geometry(&self, t: usize) -> &ElementGeometry {
        &self.geometry[t]
    }

    pub fn node_coords(&self) -> &[Point] {
        &self.node_coords
    }

    /// Coordinate of every dof (nodes repeated per component).
    pub fn dof_coords(&self) -> Vec<Point> {
        self.node_coords.iter().flat_map(|&p| std::iter::repeat_n(p, self.components)).collect()
    }

    pub fn boundary_nodes(&self, marker: BoundaryMarker) -> &[usize] {
        self.boundary_nodes.get(&marker).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn markers(&self) -> impl Iterator<Item = BoundaryMarker> + '_ {
        self.boundary_nodes.keys().copied()
    }

    /// Dofs of component `comp` on boundary nodes with the given marker.
    pub fn boundary_dofs(&self, marker: BoundaryMarker, comp: usize) -> Vec<usize> {
        self.boundary_nodes(marker).iter().map(|&n| self.components * n + comp).collect()
    }

    pub fn periodic_slaves(&self) -> &[(usize, usize)] {
        &self.periodic_slaves
    }

    /// Whether both spaces live on the same mesh.
    pub fn same_mesh(&self, other: &FeSpace) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh)
    }

    /// Barycentric coordinates of `p` in triangle `t`.
    pub fn barycentric(&self, t: usize, p: Point) -> [f64; 3] {
        let v0 = self.mesh.vertices[self.mesh.triangles[t][0]];
        let g = &self.geometry[t].grad_lambda;
        let (dx, dy) = (p[0] - v0[0], p[1] - v0[1]);
        let l1 = g[1][0] * dx + g[1][1] * dy;
        let l2 = g[2][0] * dx + g[2][1] * dy;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Triangle containing `p` with its barycentric coordinates.
    pub fn locate(&self, p: Point) -> Result<(usize, [f64; 3])> {
        (0..self.num_cells())
            .map(|t| (t, self.barycentric(t, p)))
            .find(|(_, l)| l.iter().all(|&v| v >= -1e-12))
            .ok_or(Error::PointNotFound { x: p[0], y: p[1] })
    }
}

pub fn build_space(mesh: Arc<Mesh>, degree: usize, components: usize) -> Result<Arc<FeSpace>> {
    if degree != 1 && degree != 2 {
        return Err(invalid(format!("unsupported polynomial degree {degree}")));
    }
    if components != 1 && components != 2 {
        return Err(invalid(format!("unsupported component count {components}")));
    }
    let nv = mesh.num_vertices();

    let mut vertex_master: Vec<usize> = (0..nv).collect();
    for &(m, s) in &mesh.periodic_pairs {
        vertex_master[s] = m;
    }
    // chains (a corner that is both master and slave) resolve to the root
    for v in 0..nv {
        let mut r = vertex_master[v];
        while vertex_master[r] != r {
            r = vertex_master[r];
        }
        vertex_master[v] = r;
    }

    let mut vertex_node = vec![usize::MAX; nv];
    let mut node_coords = Vec::new();
    for v in 0..nv {
        if vertex_master[v] == v {
            vertex_node[v] = node_coords.len();
            node_coords.push(mesh.vertices[v]);
        }
    }
    for v in 0..nv {
        vertex_node[v] = vertex_node[vertex_master[v]];
    }
    let mut periodic_slaves: Vec<(usize, usize)> =
        (0..nv).filter(|&v| vertex_master[v] != v).map(|v| (v, vertex_node[v])).collect();

    let mut edge_ids: HashMap<[usize; 2], usize> = HashMap::new();
    let mut edges: Vec<[usize; 2]> = Vec::new();
    let mut cell_edges = Vec::with_capacity(mesh.num_triangles());
    for tri in &mesh.triangles {
        let mut ce = [0usize; 3];
        for (k, [i, j]) in P2_EDGES.iter().enumerate() {
            let key = sorted(tri[*i], tri[*j]);
            ce[k] = *edge_ids.entry(key).or_insert_with(|| {
                edges.push(key);
                edges.len() - 1
            });
        }
        cell_edges.push(ce);
    }

    let mut edge_node = vec![usize::MAX; edges.len()];
    if degree == 2 {
        let mut edge_master: Vec<usize> = (0..edges.len()).collect();
        if mesh.is_periodic() {
            let boundary: BTreeSet<[usize; 2]> =
                mesh.boundary_edges.iter().map(|e| sorted(e.vertices[0], e.vertices[1])).collect();
            for (e, &[a, b]) in edges.iter().enumerate() {
                if vertex_master[a] == a || vertex_master[b] == b || !boundary.contains(&[a, b]) {
                    continue;
                }
                let key = sorted(vertex_master[a], vertex_master[b]);
                match edge_ids.get(&key) {
                    Some(&m) => edge_master[e] = m,
                    None => {
                        return Err(Error::Topology(format!(
                            "periodic edge {a}-{b} has no master edge {key:?}"
                        )))
                    }
                }
            }
        }
        for (e, &[a, b]) in edges.iter().enumerate() {
            if edge_master[e] == e {
                edge_node[e] = node_coords.len();
                let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
                node_coords.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            }
        }
        for e in 0..edges.len() {
            if edge_master[e] != e {
                edge_node[e] = edge_node[edge_master[e]];
                periodic_slaves.push((nv + e, edge_node[e]));
            }
        }
    }

    let cell_nodes: Vec<[usize; 6]> = mesh
        .triangles
        .iter()
        .zip(&cell_edges)
        .map(|(tri, ce)| {
            let mut n = [0usize; 6];
            for k in 0..3 {
                n[k] = vertex_node[tri[k]];
            }
            if degree == 2 {
                for k in 0..3 {
                    n[3 + k] = edge_node[ce[k]];
                }
            }
            n
        })
        .collect();

    let mut boundary_nodes: BTreeMap<BoundaryMarker, BTreeSet<usize>> = BTreeMap::new();
    for be in &mesh.boundary_edges {
        let set = boundary_nodes.entry(be.marker).or_default();
        let [a, b] = be.vertices;
        set.insert(vertex_node[a]);
        set.insert(vertex_node[b]);
        if degree == 2 {
            set.insert(edge_node[edge_ids[&sorted(a, b)]]);
        }
    }

    let geometry = mesh
        .triangles
        .iter()
        .map(|t| ElementGeometry::new([mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]]))
        .collect();

    Ok(Arc::new(FeSpace {
        num_nodes: node_coords.len(),
        mesh,
        degree,
        components,
        cell_nodes,
        node_coords,
        geometry,
        boundary_nodes: boundary_nodes.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect(),
        periodic_slaves,
    }))
}

fn sorted(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

/// Values a pointwise function may return: a scalar or a 2-vector.
pub trait PointValue {
    const COMPONENTS: usize;
    fn component(&self, c: usize) -> f64;
}

impl PointValue for f64 {
    const COMPONENTS: usize = 1;
    fn component(&self, _: usize) -> f64 {
        *self
    }
}

impl PointValue for [f64; 2] {
    const COMPONENTS: usize = 2;
    fn component(&self, c: usize) -> f64 {
        self[c]
    }
}

#[derive(Debug, Clone)]
pub struct Field {
    pub space: Arc<FeSpace>,
    pub coefficients: Vec<f64>,
}

impl Field {
    pub fn zeros(space: &Arc<FeSpace>) -> Self {
        Field { space: space.clone(), coefficients: vec![0.0; space.num_dofs()] }
    }

    pub fn from_vec(space: &Arc<FeSpace>, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != space.num_dofs() {
            return Err(invalid(format!(
                "{} coefficients for a space with {} dofs",
                coefficients.len(),
                space.num_dofs()
            )));
        }
        Ok(Field { space: space.clone(), coefficients })
    }

    /// Basis expansion at `p`; one entry per component.
    pub fn evaluate(&self, p: Point) -> Result<Vec<f64>> {
        let (t, l) = self.space.locate(p)?;
        let mut vals = [0.0; 6];
        basis_values(self.space.degree, l, &mut vals);
        let c = self.space.components;
        let mut out = vec![0.0; c];
        for (k, &n) in self.space.cell_nodes(t).iter().enumerate() {
            for (j, o) in out.iter_mut().enumerate() {
                *o += vals[k] * self.coefficients[c * n + j];
            }
        }
        Ok(out)
    }

    /// Gradient at `p`: `out[c] = grad` of component `c`.
    pub fn gradient(&self, p: Point) -> Result<Vec<[f64; 2]>> {
        let (t, l) = self.space.locate(p)?;
        let mut coef = [[0.0; 3]; 6];
        basis_grad_coeffs(self.space.degree, l, &mut coef);
        let g = &self.space.geometry[t].grad_lambda;
        let c = self.space.components;
        let mut out = vec![[0.0; 2]; c];
        for (k, &n) in self.space.cell_nodes(t).iter().enumerate() {
            let gk = [
                coef[k][0] * g[0][0] + coef[k][1] * g[1][0] + coef[k][2] * g[2][0],
                coef[k][0] * g[0][1] + coef[k][1] * g[1][1] + coef[k][2] * g[2][1],
            ];
            for (j, o) in out.iter_mut().enumerate() {
                let v = self.coefficients[c * n + j];
                o[0] += v * gk[0];
                o[1] += v * gk[1];
            }
        }
        Ok(out)
    }
}

/// Nodal interpolant: `coefficients[dof] = f(dof_coords[dof], t)[component]`.
pub fn interpolate<V: PointValue>(space: &Arc<FeSpace>, f: impl Fn(Point, f64) -> V, t: f64) -> Result<Field> {
    if V::COMPONENTS != space.components {
        return Err(invalid(format!(
            "{}-component function on a {}-component space",
            V::COMPONENTS,
            space.components
        )));
    }
    let c = space.components;
    let mut coefficients = vec![0.0; space.num_dofs()];
    for (n, &p) in space.node_coords.iter().enumerate() {
        let v = f(p, t);
        for j in 0..c {
            coefficients[c * n + j] = v.component(j);
        }
    }
    Ok(Field { space: space.clone(), coefficients })
}
