//! Bilinear operators and the convective forms with their linearizations.
//!
//! Every convective form here is bilinear in `(a, b)` and carries no
//! derivative on the test function, so a single pointwise kernel serves the
//! residual and both single-slot Jacobians.

use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::quadrature::quadrature;
use crate::space::{ElementGeometry, FeSpace, Field, Tabulation};
use crate::sparse::SparseMatrix;

/// Quadrature order used for all convective forms.
pub const NONLINEAR_ORDER: usize = 6;
const BILINEAR_ORDER: usize = 4;

/// Largest local vector dof count (P2, two components).
pub const MAX_LOCAL: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NonlinearKind {
    /// `2 (D(a) b, v) + ((div a) b, v)`
    Emac,
    /// `(a . grad b, v) + 1/2 ((div a) b, v)`
    Skew,
    /// `(a . grad b, v)`
    Conv,
    /// `((curl b) x a, v)` with the scalar 2D curl
    Rot,
    /// `(a . grad b, v)` with `a` the filtered velocity
    Leray,
}

impl NonlinearKind {
    pub const ALL: [NonlinearKind; 5] =
        [NonlinearKind::Emac, NonlinearKind::Skew, NonlinearKind::Conv, NonlinearKind::Rot, NonlinearKind::Leray];

    pub fn name(self) -> &'static str {
        match self {
            NonlinearKind::Emac => "emac",
            NonlinearKind::Skew => "skew",
            NonlinearKind::Conv => "conv",
            NonlinearKind::Rot => "rot",
            NonlinearKind::Leray => "leray",
        }
    }
}

/// Which argument of `N(a, b)` a Jacobian differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    A,
    B,
    Both,
}

/// Pointwise integrand of `N(a, b; .)`; `ga[i][j] = d a_i / d x_j`.
#[inline]
pub fn pointwise(kind: NonlinearKind, a: [f64; 2], ga: [[f64; 2]; 2], b: [f64; 2], gb: [[f64; 2]; 2]) -> [f64; 2] {
    let conv = |i: usize| a[0] * gb[i][0] + a[1] * gb[i][1];
    let div_a = ga[0][0] + ga[1][1];
    match kind {
        NonlinearKind::Emac => {
            let s = |i: usize| (ga[i][0] + ga[0][i]) * b[0] + (ga[i][1] + ga[1][i]) * b[1];
            [s(0) + div_a * b[0], s(1) + div_a * b[1]]
        }
        NonlinearKind::Skew => [conv(0) + 0.5 * div_a * b[0], conv(1) + 0.5 * div_a * b[1]],
        NonlinearKind::Conv | NonlinearKind::Leray => [conv(0), conv(1)],
        NonlinearKind::Rot => {
            let omega = gb[1][0] - gb[0][1];
            [-omega * a[1], omega * a[0]]
        }
    }
}

/// Value and gradient of a vector field at quadrature point `q` of an element.
#[inline]
pub(crate) fn vector_at(tab: &Tabulation, grads: &[[f64; 2]], q: usize, loc: &[f64]) -> ([f64; 2], [[f64; 2]; 2]) {
    let vals = tab.value_row(q);
    let mut v = [0.0; 2];
    let mut g = [[0.0; 2]; 2];
    for k in 0..tab.nloc {
        for c in 0..2 {
            let x = loc[2 * k + c];
            v[c] += vals[k] * x;
            g[c][0] += grads[k][0] * x;
            g[c][1] += grads[k][1] * x;
        }
    }
    (v, g)
}

/// Local coefficients of a field on triangle `t` (component-interleaved).
#[inline]
pub(crate) fn gather(space: &FeSpace, coeffs: &[f64], t: usize, out: &mut [f64]) {
    let c = space.components();
    for (k, &n) in space.cell_nodes(t).iter().enumerate() {
        for j in 0..c {
            out[c * k + j] = coeffs[c * n + j];
        }
    }
}

/// Element contributions of a convective form. `res` receives `N(a, b; phi_i)`;
/// `ja` / `jb` receive the slot-A / slot-B Jacobians in local numbering
/// `row * MAX_LOCAL + col`.
pub struct ElementKernel {
    kind: NonlinearKind,
    tab: Tabulation,
}

impl ElementKernel {
    pub fn new(kind: NonlinearKind, degree: usize, order: usize) -> Result<Self> {
        Ok(ElementKernel { kind, tab: Tabulation::new(degree, &quadrature(order)?) })
    }

    pub fn nloc(&self) -> usize {
        self.tab.nloc
    }

    pub fn eval(
        &self,
        geo: &ElementGeometry,
        a: &[f64],
        b: &[f64],
        mut res: Option<&mut [f64]>,
        mut ja: Option<&mut [f64]>,
        mut jb: Option<&mut [f64]>,
    ) {
        let tab = &self.tab;
        let nl = tab.nloc;
        let nd = 2 * nl;
        if let Some(r) = res.as_deref_mut() {
            r[..nd].fill(0.0);
        }
        for m in [ja.as_deref_mut(), jb.as_deref_mut()].into_iter().flatten() {
            m[..MAX_LOCAL * MAX_LOCAL].fill(0.0);
        }
        let mut grads = [[0.0; 2]; 6];
        for q in 0..tab.num_points() {
            tab.gradients(geo, q, &mut grads);
            let vals = tab.value_row(q);
            let w = tab.weights[q] * geo.area;
            let (av, ag) = vector_at(tab, &grads, q, a);
            let (bv, bg) = vector_at(tab, &grads, q, b);
            if let Some(r) = res.as_deref_mut() {
                let n = pointwise(self.kind, av, ag, bv, bg);
                for i in 0..nl {
                    r[2 * i] += w * n[0] * vals[i];
                    r[2 * i + 1] += w * n[1] * vals[i];
                }
            }
            if ja.is_none() && jb.is_none() {
                continue;
            }
            for k in 0..nl {
                for c in 0..2 {
                    let mut pv = [0.0; 2];
                    pv[c] = vals[k];
                    let mut pg = [[0.0; 2]; 2];
                    pg[c] = grads[k];
                    let col = 2 * k + c;
                    let na = ja.is_some().then(|| pointwise(self.kind, pv, pg, bv, bg));
                    let nb = jb.is_some().then(|| pointwise(self.kind, av, ag, pv, pg));
                    for (m, n) in [(ja.as_deref_mut(), na), (jb.as_deref_mut(), nb)] {
                        let (Some(m), Some(n)) = (m, n) else { continue };
                        for i in 0..nl {
                            m[(2 * i) * MAX_LOCAL + col] += w * n[0] * vals[i];
                            m[(2 * i + 1) * MAX_LOCAL + col] += w * n[1] * vals[i];
                        }
                    }
                }
            }
        }
    }
}

fn check_pair(a: &Field, b: &Field) -> Result<()> {
    if !Arc::ptr_eq(&a.space, &b.space) {
        return Err(invalid("nonlinear form arguments live on different spaces"));
    }
    if a.space.components() != 2 {
        return Err(invalid("nonlinear forms need a vector velocity space"));
    }
    Ok(())
}

/// `out[i] = N(a, b; phi_i)` over the velocity test space.
pub fn apply_nonlinear(kind: NonlinearKind, a: &Field, b: &Field) -> Result<Vec<f64>> {
    apply_nonlinear_with_order(kind, a, b, NONLINEAR_ORDER)
}

pub fn apply_nonlinear_with_order(kind: NonlinearKind, a: &Field, b: &Field, order: usize) -> Result<Vec<f64>> {
    check_pair(a, b)?;
    let space = &a.space;
    let kernel = ElementKernel::new(kind, space.degree(), order)?;
    let mut out = vec![0.0; space.num_dofs()];
    let (mut al, mut bl, mut rl) = ([0.0; MAX_LOCAL], [0.0; MAX_LOCAL], [0.0; MAX_LOCAL]);
    for t in 0..space.num_cells() {
        gather(space, &a.coefficients, t, &mut al);
        gather(space, &b.coefficients, t, &mut bl);
        kernel.eval(space.geometry(t), &al, &bl, Some(&mut rl), None, None);
        for (k, &n) in space.cell_nodes(t).iter().enumerate() {
            out[2 * n] += rl[2 * k];
            out[2 * n + 1] += rl[2 * k + 1];
        }
    }
    Ok(out)
}

/// Jacobian of `N(a, b; .)` with respect to the chosen slot(s).
pub fn assemble_nonlinear_jacobian(kind: NonlinearKind, a: &Field, b: &Field, slot: Slot) -> Result<SparseMatrix> {
    check_pair(a, b)?;
    let space = &a.space;
    let kernel = ElementKernel::new(kind, space.degree(), NONLINEAR_ORDER)?;
    let nd = 2 * kernel.nloc();
    let (mut al, mut bl) = ([0.0; MAX_LOCAL], [0.0; MAX_LOCAL]);
    let mut ja = vec![0.0; MAX_LOCAL * MAX_LOCAL];
    let mut jb = vec![0.0; MAX_LOCAL * MAX_LOCAL];
    let (mut r, mut c, mut v) = (Vec::new(), Vec::new(), Vec::new());
    for t in 0..space.num_cells() {
        gather(space, &a.coefficients, t, &mut al);
        gather(space, &b.coefficients, t, &mut bl);
        let want_a = matches!(slot, Slot::A | Slot::Both);
        let want_b = matches!(slot, Slot::B | Slot::Both);
        kernel.eval(
            space.geometry(t),
            &al,
            &bl,
            None,
            want_a.then_some(&mut ja[..]),
            want_b.then_some(&mut jb[..]),
        );
        let dofs = space.cell_dofs(t);
        for i in 0..nd {
            for j in 0..nd {
                let mut x = 0.0;
                if want_a {
                    x += ja[i * MAX_LOCAL + j];
                }
                if want_b {
                    x += jb[i * MAX_LOCAL + j];
                }
                r.push(dofs[i]);
                c.push(dofs[j]);
                v.push(x);
            }
        }
    }
    SparseMatrix::from_triplets(&r, &c, &v, (space.num_dofs(), space.num_dofs()))
}

type LocalBlocks = [[[f64; 6]; 6]; 2];

/// Element-by-element integration of a bilinear form between two spaces on
/// the same mesh. The kernel receives the quadrature weight, test values and
/// gradients, trial values and gradients, and adds into two local blocks in
/// scalar basis numbering.
fn integrate_pairs(
    test: &FeSpace,
    trial: &FeSpace,
    kernel: impl Fn(f64, &[f64], &[[f64; 2]], &[f64], &[[f64; 2]], &mut LocalBlocks),
) -> Result<Vec<LocalBlocks>> {
    if !test.same_mesh(trial) {
        return Err(invalid("spaces are defined on different meshes"));
    }
    let rule = quadrature(BILINEAR_ORDER)?;
    let tt = Tabulation::new(test.degree(), &rule);
    let tr = Tabulation::new(trial.degree(), &rule);
    let mut locals = Vec::with_capacity(test.num_cells());
    let (mut gt, mut gr) = ([[0.0; 2]; 6], [[0.0; 2]; 6]);
    for t in 0..test.num_cells() {
        let geo = test.geometry(t);
        let mut loc = [[[0.0; 6]; 6]; 2];
        for q in 0..rule.len() {
            tt.gradients(geo, q, &mut gt);
            tr.gradients(geo, q, &mut gr);
            let w = rule.weights[q] * geo.area;
            kernel(w, tt.value_row(q), &gt[..tt.nloc], tr.value_row(q), &gr[..tr.nloc], &mut loc);
        }
        locals.push(loc);
    }
    Ok(locals)
}

/// Expands per-element scalar blocks into a global matrix; vector spaces get
/// the block repeated on each component.
fn scatter_diagonal(space: &FeSpace, locals: &[LocalBlocks]) -> Result<SparseMatrix> {
    let nl = space.nloc();
    let comps = space.components();
    let (mut r, mut c, mut v) = (Vec::new(), Vec::new(), Vec::new());
    for (t, loc) in locals.iter().enumerate() {
        let nodes = space.cell_nodes(t);
        for i in 0..nl {
            for j in 0..nl {
                for k in 0..comps {
                    r.push(comps * nodes[i] + k);
                    c.push(comps * nodes[j] + k);
                    v.push(loc[0][i][j]);
                }
            }
        }
    }
    SparseMatrix::from_triplets(&r, &c, &v, (space.num_dofs(), space.num_dofs()))
}

/// `(phi_j, phi_i)`, componentwise for vector spaces.
pub fn assemble_mass(space: &FeSpace) -> Result<SparseMatrix> {
    let locals = integrate_pairs(space, space, |w, vi, _, vj, _, loc| {
        for i in 0..vi.len() {
            for j in 0..vj.len() {
                loc[0][i][j] += w * vi[i] * vj[j];
            }
        }
    })?;
    scatter_diagonal(space, &locals)
}

/// `(grad phi_j, grad phi_i)`, componentwise for vector spaces.
pub fn assemble_stiffness(space: &FeSpace) -> Result<SparseMatrix> {
    let locals = integrate_pairs(space, space, |w, _, gi, _, gj, loc| {
        for i in 0..gi.len() {
            for j in 0..gj.len() {
                loc[0][i][j] += w * (gi[i][0] * gj[j][0] + gi[i][1] * gj[j][1]);
            }
        }
    })?;
    scatter_diagonal(space, &locals)
}

/// `B[i, j] = (q_i, div v_j)` with `q` scalar pressure and `v` vector velocity.
pub fn assemble_divergence(vel: &FeSpace, pres: &FeSpace) -> Result<SparseMatrix> {
    if vel.components() != 2 || pres.components() != 1 {
        return Err(invalid("divergence needs a vector velocity and a scalar pressure space"));
    }
    let locals = integrate_pairs(pres, vel, |w, qi, _, _, gj, loc| {
        for i in 0..qi.len() {
            for j in 0..gj.len() {
                loc[0][i][j] += w * qi[i] * gj[j][0];
                loc[1][i][j] += w * qi[i] * gj[j][1];
            }
        }
    })?;
    let (mut r, mut c, mut v) = (Vec::new(), Vec::new(), Vec::new());
    for (t, loc) in locals.iter().enumerate() {
        for (i, &pi) in pres.cell_nodes(t).iter().enumerate() {
            for (j, &vj) in vel.cell_nodes(t).iter().enumerate() {
                r.extend([pi, pi]);
                c.extend([2 * vj, 2 * vj + 1]);
                v.extend([loc[0][i][j], loc[1][i][j]]);
            }
        }
    }
    SparseMatrix::from_triplets(&r, &c, &v, (pres.num_dofs(), vel.num_dofs()))
}

/// `m[i] = integral of phi_i` for a scalar space.
pub fn mean_vector(space: &FeSpace) -> Result<Vec<f64>> {
    if space.components() != 1 {
        return Err(invalid("mean constraint needs a scalar space"));
    }
    let rule = quadrature(BILINEAR_ORDER)?;
    let tab = Tabulation::new(space.degree(), &rule);
    let mut m = vec![0.0; space.num_dofs()];
    for t in 0..space.num_cells() {
        let area = space.geometry(t).area;
        for q in 0..rule.len() {
            for (k, &n) in space.cell_nodes(t).iter().enumerate() {
                m[n] += rule.weights[q] * area * tab.value_row(q)[k];
            }
        }
    }
    Ok(m)
}

/// Mass, stiffness, divergence and pressure mass matrices of a Taylor-Hood pair.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub mass: SparseMatrix,
    pub stiffness: SparseMatrix,
    pub divergence: SparseMatrix,
    pub pressure_mass: SparseMatrix,
    pub pressure_mean: Vec<f64>,
}

impl OperatorSet {
    pub fn assemble(vel: &FeSpace, pres: &FeSpace) -> Result<Self> {
        Ok(OperatorSet {
            mass: assemble_mass(vel)?,
            stiffness: assemble_stiffness(vel)?,
            divergence: assemble_divergence(vel, pres)?,
            pressure_mass: assemble_mass(pres)?,
            pressure_mean: mean_vector(pres)?,
        })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
