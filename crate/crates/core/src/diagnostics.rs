//! Conserved quantities, norms, errors against exact solutions, and the
//! momentum probes for non-solenoidal fields.

use std::sync::Arc;

use crate::benchmarks::AnalyticSolution;
use crate::error::{invalid, Result};
use crate::mesh::Point;
use crate::operators::{apply_nonlinear, dot, gather, vector_at, NonlinearKind, MAX_LOCAL};
use crate::quadrature::quadrature;
use crate::schemes::State;
use crate::space::{interpolate, FeSpace, Field, Tabulation};
use crate::sparse::SparseMatrix;

/// Quadrature order for error norms.
pub const ERROR_ORDER: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// `1/2 (u, w)`
    pub energy_model: f64,
    /// `1/2 |u|^2`
    pub energy_kinetic: f64,
    pub momentum: [f64; 2],
    /// `(u, (y, -x))`
    pub ang_momentum: f64,
    /// `1/2 |curl u|^2`
    pub enstrophy: f64,
    pub div_u: f64,
    pub div_w: f64,
    pub err_l2_u: Option<f64>,
    pub err_l2_w: Option<f64>,
    pub err_h1_w: Option<f64>,
}

/// Value and gradient of each field at one quadrature point.
pub type PointData = ([f64; 2], [[f64; 2]; 2]);

/// `sum over cells and points of weight * f(x, data)` for vector fields on a
/// common space.
pub fn integrate_fields(fields: &[&Field], order: usize, mut f: impl FnMut(Point, &[PointData]) -> f64) -> Result<f64> {
    let space = fields.first().map(|x| x.space.clone()).ok_or_else(|| invalid("no fields to integrate"))?;
    if fields.iter().any(|x| !Arc::ptr_eq(&x.space, &space)) || space.components() != 2 {
        return Err(invalid("fields must share one vector space"));
    }
    let tab = Tabulation::new(space.degree(), &quadrature(order)?);
    let mesh = space.mesh();
    let mut locs = vec![[0.0; MAX_LOCAL]; fields.len()];
    let mut data = vec![([0.0; 2], [[0.0; 2]; 2]); fields.len()];
    let mut grads = [[0.0; 2]; 6];
    let mut total = 0.0;
    for t in 0..space.num_cells() {
        for (k, fld) in fields.iter().enumerate() {
            gather(&space, &fld.coefficients, t, &mut locs[k]);
        }
        let geo = space.geometry(t);
        let tri = mesh.triangles[t];
        for q in 0..tab.num_points() {
            tab.gradients(geo, q, &mut grads);
            for k in 0..fields.len() {
                data[k] = vector_at(&tab, &grads, q, &locs[k]);
            }
            let l = tab.points[q];
            let x = [0, 1].map(|d| (0..3).map(|i| l[i] * mesh.vertices[tri[i]][d]).sum::<f64>());
            total += tab.weights[q] * geo.area * f(x, &data);
        }
    }
    Ok(total)
}

/// `(E, M, AM)` with `E = 1/2 (u, w)`, `M_i = (u, e_i)`, `AM = (u, (y, -x))`.
pub fn conserved_quantities(state: &State) -> Result<(f64, [f64; 2], f64)> {
    let mut acc = [0.0; 4];
    let order = ERROR_ORDER;
    acc[0] = integrate_fields(&[&state.u, &state.w], order, |_, d| 0.5 * (d[0].0[0] * d[1].0[0] + d[0].0[1] * d[1].0[1]))?;
    acc[1] = integrate_fields(&[&state.u], order, |_, d| d[0].0[0])?;
    acc[2] = integrate_fields(&[&state.u], order, |_, d| d[0].0[1])?;
    acc[3] = integrate_fields(&[&state.u], order, |x, d| d[0].0[0] * x[1] - d[0].0[1] * x[0])?;
    Ok((acc[0], [acc[1], acc[2]], acc[3]))
}

/// `1/2 |u|^2`
pub fn kinetic_energy(u: &Field) -> Result<f64> {
    integrate_fields(&[u], ERROR_ORDER, |_, d| 0.5 * (d[0].0[0].powi(2) + d[0].0[1].powi(2)))
}

/// `1/2 |curl u|^2`
pub fn enstrophy(u: &Field) -> Result<f64> {
    integrate_fields(&[u], ERROR_ORDER, |_, d| {
        let g = d[0].1;
        0.5 * (g[1][0] - g[0][1]).powi(2)
    })
}

/// L2 norm of the pointwise divergence.
pub fn divergence_norm(u: &Field) -> Result<f64> {
    Ok(integrate_fields(&[u], ERROR_ORDER, |_, d| (d[0].1[0][0] + d[0].1[1][1]).powi(2))?.sqrt())
}

/// `|w|^2 + alpha^2 |grad w|^2`, the quantity bounded by the stability estimate.
pub fn filter_energy(w: &Field, alpha: f64) -> Result<f64> {
    integrate_fields(&[w], ERROR_ORDER, |_, d| {
        let (v, g) = d[0];
        v[0] * v[0] + v[1] * v[1] + alpha * alpha * (g[0][0].powi(2) + g[0][1].powi(2) + g[1][0].powi(2) + g[1][1].powi(2))
    })
}

/// `1/2 u^T M w` from an assembled mass matrix.
pub fn energy_from_mass(mass: &SparseMatrix, u: &Field, w: &Field) -> f64 {
    0.5 * dot(&u.coefficients, &mass.matvec(&w.coefficients))
}

/// L2 error of `field` against a pointwise function.
pub fn l2_error(field: &Field, exact: impl Fn(Point) -> [f64; 2]) -> Result<f64> {
    Ok(integrate_fields(&[field], ERROR_ORDER, |x, d| {
        let e = exact(x);
        (d[0].0[0] - e[0]).powi(2) + (d[0].0[1] - e[1]).powi(2)
    })?
    .sqrt())
}

/// H1 seminorm error of `field` against a pointwise gradient
/// (`g[i][j] = d_j f_i`).
pub fn h1_error(field: &Field, exact_grad: impl Fn(Point) -> [[f64; 2]; 2]) -> Result<f64> {
    Ok(integrate_fields(&[field], ERROR_ORDER, |x, d| {
        let e = exact_grad(x);
        let g = d[0].1;
        (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| (g[i][j] - e[i][j]).powi(2)).sum()
    })?
    .sqrt())
}

/// `(|u - u_ex|, |w - w_ex|, |grad (w - w_ex)|)` at time `t`; entries are
/// `None` when the solution does not provide the corresponding field.
pub fn errors_vs_analytic(
    state: &State,
    exact: &AnalyticSolution,
    t: f64,
) -> Result<(Option<f64>, Option<f64>, Option<f64>)> {
    let eu = exact.u.as_ref().map(|u| l2_error(&state.u, |x| u(x, t))).transpose()?;
    let ew = exact.w.as_ref().map(|w| l2_error(&state.w, |x| w(x, t))).transpose()?;
    let eh = exact.grad_w.as_ref().map(|g| h1_error(&state.w, |x| g(x, t))).transpose()?;
    Ok((eu, ew, eh))
}

/// Full per-step record; `alpha`-free, errors only when `exact` is given.
pub fn record(state: &State, exact: Option<&AnalyticSolution>) -> Result<DiagnosticsRecord> {
    let (energy_model, momentum, ang_momentum) = conserved_quantities(state)?;
    let (err_l2_u, err_l2_w, err_h1_w) = match exact {
        Some(e) => errors_vs_analytic(state, e, state.t)?,
        None => (None, None, None),
    };
    Ok(DiagnosticsRecord {
        t: state.t,
        energy_model,
        energy_kinetic: kinetic_energy(&state.u)?,
        momentum,
        ang_momentum,
        enstrophy: enstrophy(&state.u)?,
        div_u: divergence_norm(&state.u)?,
        div_w: divergence_norm(&state.w)?,
        err_l2_u,
        err_l2_w,
        err_h1_w,
    })
}

/// Test functions for the momentum probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeTest {
    E1,
    E2,
    /// `(y, -x)`
    Phi,
}

impl ProbeTest {
    pub const ALL: [ProbeTest; 3] = [ProbeTest::E1, ProbeTest::E2, ProbeTest::Phi];

    pub fn eval(self, x: Point) -> [f64; 2] {
        match self {
            ProbeTest::E1 => [1.0, 0.0],
            ProbeTest::E2 => [0.0, 1.0],
            ProbeTest::Phi => [x[1], -x[0]],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProbeTest::E1 => "e1",
            ProbeTest::E2 => "e2",
            ProbeTest::Phi => "phi",
        }
    }
}

/// Profile of the cut-off between the probe box and the walls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RollOff {
    Smooth,
    Linear,
}

/// Inner box carrying the probe fields; the strip between it and the unit
/// square boundary is where the test function is cut off.
pub const PROBE_BOX: [f64; 2] = [0.25, 0.75];

fn roll_off(profile: RollOff, x: Point) -> f64 {
    let [lo, hi] = PROBE_BOX;
    let ramp = |s: f64| {
        let s = s.clamp(0.0, 1.0);
        match profile {
            RollOff::Smooth => s * s * (3.0 - 2.0 * s),
            RollOff::Linear => s,
        }
    };
    let one = |v: f64| {
        if v < lo {
            ramp(v / lo)
        } else if v > hi {
            ramp((1.0 - v) / (1.0 - hi))
        } else {
            1.0
        }
    };
    one(x[0]) * one(x[1])
}

/// Cut-off test function `chi = I(rho * g)` on the velocity space.
pub fn probe_test_function(space: &Arc<FeSpace>, test: ProbeTest, profile: RollOff) -> Result<Field> {
    interpolate(space, |x, _| {
        let r = roll_off(profile, x);
        let g = test.eval(x);
        [r * g[0], r * g[1]]
    }, 0.0)
}

fn check_support(f: &Field, what: &str) -> Result<()> {
    let [lo, hi] = PROBE_BOX;
    let eps = 1e-12;
    for (n, p) in f.space.node_coords().iter().enumerate() {
        let inside = p.iter().all(|&c| c > lo + eps && c < hi - eps);
        if !inside && (0..2).any(|c| f.coefficients[2 * n + c] != 0.0) {
            return Err(invalid(format!(
                "{what} is nonzero at ({}, {}) outside the probe box interior",
                p[0], p[1]
            )));
        }
    }
    Ok(())
}

/// Value of the convective form tested against the cut-off extension of
/// `test`. EMAC, skew and plain convection act on `(w, w)`; rotational and
/// Leray forms act on `(w, u)`.
pub fn momentum_probe(kind: NonlinearKind, w: &Field, u: &Field, test: ProbeTest) -> Result<f64> {
    momentum_probe_with(kind, w, u, test, RollOff::Smooth)
}

pub fn momentum_probe_with(kind: NonlinearKind, w: &Field, u: &Field, test: ProbeTest, profile: RollOff) -> Result<f64> {
    check_support(w, "w")?;
    check_support(u, "u")?;
    let b = match kind {
        NonlinearKind::Emac | NonlinearKind::Skew | NonlinearKind::Conv => w,
        NonlinearKind::Rot | NonlinearKind::Leray => u,
    };
    let r = apply_nonlinear(kind, w, b)?;
    let chi = probe_test_function(&w.space, test, profile)?;
    Ok(dot(&r, &chi.coefficients))
}

fn bump(s: f64) -> f64 {
    let [lo, hi] = PROBE_BOX;
    if (lo..=hi).contains(&s) {
        ((s - lo) * (hi - s) / (0.25 * (hi - lo) * (hi - lo))).powi(2)
    } else {
        0.0
    }
}

/// Non-solenoidal probe pair on `space`, supported in the probe box:
/// `w = b(x) b(y) (x, 0)` and `u = b(x) b(y) (1 + y, x - 0.2)` with the
/// quartic bump `b`.
pub fn probe_fields(space: &Arc<FeSpace>) -> Result<(Field, Field)> {
    let w = interpolate(space, |x, _| [bump(x[0]) * bump(x[1]) * x[0], 0.0], 0.0)?;
    let u = interpolate(space, |x, _| {
        let b = bump(x[0]) * bump(x[1]);
        [b * (1.0 + x[1]), b * (x[0] - 0.2)]
    }, 0.0)?;
    Ok((w, u))
}
