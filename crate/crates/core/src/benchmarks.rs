//! The four experiments: analytic data, meshes, boundary conditions and
//! parameter sets, plus runners for single benchmarks and convergence studies.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::bc::{BoundaryConditions, Components, DirichletCondition, VectorFn};
use crate::diagnostics::{record, DiagnosticsRecord};
use crate::error::{invalid, Result};
use crate::mesh::{build_rectangle_mesh, build_step_channel_mesh, identify_periodic, Axis, BoundaryMarker, Mesh, Point, Rect};
use crate::schemes::{ForcingFn, Integrator, Observer, Scheme, State, Stepper, StepperConfig};
use crate::space::build_space;

pub type GradFn = Arc<dyn Fn(Point, f64) -> [[f64; 2]; 2] + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(Point, f64) -> f64 + Send + Sync>;

/// Closed-form fields; `None` marks a field the solution does not provide.
#[derive(Clone, Default)]
pub struct AnalyticSolution {
    pub u: Option<VectorFn>,
    pub w: Option<VectorFn>,
    /// `g[i][j] = d w_i / d x_j`
    pub grad_w: Option<GradFn>,
    pub p: Option<ScalarFn>,
}

impl fmt::Debug for AnalyticSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnalyticSolution")
            .field("u", &self.u.is_some())
            .field("w", &self.w.is_some())
            .field("grad_w", &self.grad_w.is_some())
            .field("p", &self.p.is_some())
            .finish()
    }
}

/// Domain and mesh generator of a benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Rectangle(Rect),
    /// Rectangle with periodic identification in `x`.
    PeriodicX(Rect),
    StepChannel,
}

/// How boundary data is prescribed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    /// `u` and `w` take the analytic values on every side.
    Analytic,
    /// Homogeneous no-slip for `u` and `w`.
    NoSlip,
    /// Parabolic inflow/outflow with no-slip walls, same data for `w`.
    Channel,
    /// Normal component pinned on the horizontal walls, tangential free.
    FreeSlipWalls,
}

/// Filter radius rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaRule {
    Fixed(f64),
    /// `alpha = factor * h`
    MeshFraction(f64),
}

#[derive(Clone)]
pub struct BenchmarkSpec {
    pub name: &'static str,
    pub domain: Domain,
    pub h: f64,
    pub nu: f64,
    pub alpha: AlphaRule,
    pub dt: f64,
    pub end_time: f64,
    pub integrator: Integrator,
    pub boundary: BoundaryKind,
    pub initial_u: VectorFn,
    /// Exact filtered initial data, when known.
    pub initial_w: Option<VectorFn>,
    pub forcing: Option<ForcingFn>,
    pub analytic: Option<AnalyticSolution>,
    /// Parameters match the published experiment.
    pub paper_exact: bool,
}

impl fmt::Debug for BenchmarkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BenchmarkSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("h", &self.h)
            .field("nu", &self.nu)
            .field("alpha", &self.alpha)
            .field("dt", &self.dt)
            .field("end_time", &self.end_time)
            .field("integrator", &self.integrator)
            .field("boundary", &self.boundary)
            .field("paper_exact", &self.paper_exact)
            .finish_non_exhaustive()
    }
}

pub const BENCHMARK_NAMES: [&str; 4] = ["chorin", "gresho", "step", "kh"];

/// Looks a benchmark up by name.
pub fn by_name(name: &str) -> Result<BenchmarkSpec> {
    match name.to_ascii_lowercase().as_str() {
        "chorin" | "chorin_like" => Ok(chorin_like()),
        "gresho" => Ok(gresho()),
        "step" | "step_channel" => Ok(step_channel()),
        "kh" | "kelvin_helmholtz" => Ok(kelvin_helmholtz()),
        _ => Err(invalid(format!("unknown benchmark '{name}' (expected one of {})", BENCHMARK_NAMES.join(", ")))),
    }
}

impl BenchmarkSpec {
    pub fn alpha_value(&self) -> f64 {
        match self.alpha {
            AlphaRule::Fixed(a) => a,
            AlphaRule::MeshFraction(f) => f * self.h,
        }
    }

    pub fn with_h(mut self, h: f64) -> Self {
        if h != self.h {
            self.h = h;
            self.paper_exact = false;
        }
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        if dt != self.dt {
            self.dt = dt;
            self.paper_exact = false;
        }
        self
    }

    pub fn with_end_time(mut self, t: f64) -> Self {
        self.end_time = t;
        self
    }

    pub fn build_mesh(&self) -> Result<Mesh> {
        if !(self.h > 0.0) {
            return Err(invalid(format!("mesh size must be positive, got {}", self.h)));
        }
        let cells = |len: f64| ((len / self.h) - 1e-9).ceil().max(1.0) as usize;
        match self.domain {
            Domain::Rectangle(r) => build_rectangle_mesh(cells(r.x1 - r.x0), cells(r.y1 - r.y0), r),
            Domain::PeriodicX(r) => {
                identify_periodic(&build_rectangle_mesh(cells(r.x1 - r.x0), cells(r.y1 - r.y0), r)?, Axis::X)
            }
            Domain::StepChannel => build_step_channel_mesh(self.h),
        }
    }

    /// Boundary conditions for `u` and `w`.
    pub fn conditions(&self) -> (BoundaryConditions, BoundaryConditions) {
        let all = [BoundaryMarker::Bottom, BoundaryMarker::Top, BoundaryMarker::Left, BoundaryMarker::Right];
        match self.boundary {
            BoundaryKind::Analytic => {
                let a = self.analytic.clone().unwrap_or_default();
                let zero: VectorFn = Arc::new(|_, _| [0.0, 0.0]);
                let u = a.u.clone().unwrap_or(zero.clone());
                // w falls back to the velocity data when no exact filtered field exists
                let w = a.w.clone().unwrap_or(u.clone());
                (
                    BoundaryConditions::new(vec![DirichletCondition::new(&all, Components::Both, u)]),
                    BoundaryConditions::new(vec![DirichletCondition::new(&all, Components::Both, w)]),
                )
            }
            BoundaryKind::NoSlip => {
                let bc = BoundaryConditions::new(vec![DirichletCondition::homogeneous(&all, Components::Both)]);
                (bc.clone(), bc)
            }
            BoundaryKind::Channel => {
                let profile: VectorFn = Arc::new(|x, _| [channel_profile(x[1]), 0.0]);
                let bc = BoundaryConditions::new(vec![
                    DirichletCondition::homogeneous(&[BoundaryMarker::Wall], Components::Both),
                    DirichletCondition::new(&[BoundaryMarker::Inflow, BoundaryMarker::Outflow], Components::Both, profile),
                ]);
                (bc.clone(), bc)
            }
            BoundaryKind::FreeSlipWalls => {
                let bc = BoundaryConditions::new(vec![DirichletCondition::homogeneous(
                    &[BoundaryMarker::Bottom, BoundaryMarker::Top],
                    Components::Y,
                )]);
                (bc.clone(), bc)
            }
        }
    }

    pub fn stepper_config(&self, scheme: Scheme) -> StepperConfig {
        let alpha = if scheme.is_filtered() { self.alpha_value() } else { 0.0 };
        let mut cfg = StepperConfig::new(scheme, self.integrator, self.dt, self.nu, alpha);
        cfg.forcing = self.forcing.clone();
        cfg
    }

    /// Stepper and initial state for `scheme` using `config` (normally from
    /// [`BenchmarkSpec::stepper_config`]).
    pub fn setup_with(&self, config: StepperConfig) -> Result<(Stepper, State)> {
        let mesh = Arc::new(self.build_mesh()?);
        let vel = build_space(mesh.clone(), 2, 2)?;
        let pres = build_space(mesh, 1, 1)?;
        let (ubc, wbc) = self.conditions();
        let stepper = Stepper::new(config, vel, pres, ubc, wbc)?;
        let u0 = self.initial_u.clone();
        let state = stepper.initial_state(move |x| u0(x, 0.0))?;
        Ok((stepper, state))
    }

    pub fn setup(&self, scheme: Scheme) -> Result<(Stepper, State)> {
        self.setup_with(self.stepper_config(scheme))
    }
}

/// Runs a configured stepper to `end_time`, recording diagnostics every
/// `every` steps (and always at the final step).
pub fn run_recorded(
    stepper: &mut Stepper,
    initial: State,
    end_time: f64,
    exact: Option<&AnalyticSolution>,
    every: usize,
    extra: &mut [&mut dyn Observer],
) -> Result<(State, Vec<DiagnosticsRecord>)> {
    let every = every.max(1);
    let steps = stepper.steps_to(initial.t, end_time);
    let mut records = Vec::new();
    let mut count = 0usize;
    let mut rec = |s: &State| -> Result<()> {
        if count % every == 0 || count == steps {
            records.push(record(s, exact)?);
        }
        count += 1;
        Ok(())
    };
    let mut observers: Vec<&mut dyn Observer> = vec![&mut rec];
    for o in extra.iter_mut() {
        observers.push(&mut **o);
    }
    let last = stepper.run(initial, end_time, &mut observers)?;
    drop(observers);
    Ok((last, records))
}

/// Sets up and runs `spec` with `scheme` to `end_time`.
pub fn run_benchmark(spec: &BenchmarkSpec, scheme: Scheme, end_time: f64, every: usize) -> Result<Vec<DiagnosticsRecord>> {
    let (mut stepper, state) = spec.setup(scheme)?;
    Ok(run_recorded(&mut stepper, state, end_time, spec.analytic.as_ref(), every, &mut [])?.1)
}

// ---------------------------------------------------------------- analytic data

/// Decaying vortex used for the convergence tests: `w` and its gradient.
pub fn chorin_w(x: Point, t: f64, nu: f64) -> [f64; 2] {
    let d = (-2.0 * PI * PI * nu * t).exp();
    [-(PI * x[0]).cos() * (PI * x[1]).sin() * d, (PI * x[0]).sin() * (PI * x[1]).cos() * d]
}

pub fn chorin_grad_w(x: Point, t: f64, nu: f64) -> [[f64; 2]; 2] {
    let d = (-2.0 * PI * PI * nu * t).exp();
    let (sx, cx, sy, cy) = ((PI * x[0]).sin(), (PI * x[0]).cos(), (PI * x[1]).sin(), (PI * x[1]).cos());
    [[PI * sx * sy * d, -PI * cx * cy * d], [PI * cx * cy * d, -PI * sx * sy * d]]
}

/// `w . grad w` of the decaying vortex.
pub fn chorin_convective(x: Point, t: f64, nu: f64) -> [f64; 2] {
    let w = chorin_w(x, t, nu);
    let g = chorin_grad_w(x, t, nu);
    [w[0] * g[0][0] + w[1] * g[0][1], w[0] * g[1][0] + w[1] * g[1][1]]
}

/// Scalar pressure with `grad p = -w . grad w`.
pub fn chorin_pressure(x: Point, t: f64, nu: f64) -> f64 {
    -0.25 * ((2.0 * PI * x[0]).cos() + (2.0 * PI * x[1]).cos()) * (-4.0 * PI * PI * nu * t).exp()
}

pub const CHORIN_NU: f64 = 0.2;

/// Decaying-vortex convergence problem on the unit square.
pub fn chorin_like() -> BenchmarkSpec {
    chorin_with(1.0 / 8.0, CHORIN_NU)
}

fn chorin_with(h: f64, nu: f64) -> BenchmarkSpec {
    let alpha = AlphaRule::MeshFraction(0.5);
    let spec_alpha = 0.5 * h;
    BenchmarkSpec {
        name: "chorin",
        domain: Domain::Rectangle(Rect::unit()),
        h,
        nu,
        alpha,
        dt: 0.005,
        end_time: 1.0,
        integrator: Integrator::CrankNicolson,
        boundary: BoundaryKind::Analytic,
        initial_u: chorin_u_fn(spec_alpha, nu),
        initial_w: Some(Arc::new(move |x, t| chorin_w(x, t, nu))),
        forcing: None,
        analytic: Some(chorin_analytic(spec_alpha, nu)),
        paper_exact: true,
    }
}

fn chorin_u_fn(alpha: f64, nu: f64) -> VectorFn {
    let s = 1.0 + 2.0 * PI * PI * alpha * alpha;
    Arc::new(move |x, t| chorin_w(x, t, nu).map(|v| s * v))
}

pub fn chorin_analytic(alpha: f64, nu: f64) -> AnalyticSolution {
    AnalyticSolution {
        u: Some(chorin_u_fn(alpha, nu)),
        w: Some(Arc::new(move |x, t| chorin_w(x, t, nu))),
        grad_w: Some(Arc::new(move |x, t| chorin_grad_w(x, t, nu))),
        p: Some(Arc::new(move |x, t| chorin_pressure(x, t, nu))),
    }
}

impl BenchmarkSpec {
    /// Re-derives mesh-dependent data (the decaying vortex ties `alpha` and
    /// hence `u` to `h`).
    pub fn refined(self, h: f64) -> Self {
        self.with_h(h).rederived()
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        if nu != self.nu {
            self.nu = nu;
            self.paper_exact = false;
        }
        self.rederived()
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        if alpha != self.alpha_value() {
            self.paper_exact = false;
        }
        self.alpha = AlphaRule::Fixed(alpha);
        self.rederived()
    }

    /// Rebuilds data that depends on `h`, `nu` or `alpha`.
    fn rederived(mut self) -> Self {
        if self.name == "chorin" {
            let (alpha, nu) = (self.alpha_value(), self.nu);
            self.initial_u = chorin_u_fn(alpha, nu);
            self.initial_w = Some(Arc::new(move |x, t| chorin_w(x, t, nu)));
            self.analytic = Some(chorin_analytic(alpha, nu));
        }
        self
    }
}

/// Pressure constants exactly as printed in the problem statement.
pub fn gresho_constants() -> (f64, f64) {
    let c2 = -12.5 * 0.4f64.powi(2) + 20.0 * 0.4f64.powi(2) - 4.0 * 0.4f64.ln();
    let c1 = c2 - 20.0 * 0.2 + 4.0 * 0.2f64.ln();
    (c1, c2)
}

/// Standing vortex: azimuthal speed `5r`, then `2 - 5r`, then zero.
pub fn gresho_velocity(x: Point) -> [f64; 2] {
    let r = x[0].hypot(x[1]);
    if r <= 0.2 {
        [-5.0 * x[1], 5.0 * x[0]]
    } else if r <= 0.4 {
        [-2.0 * x[1] / r + 5.0 * x[1], 2.0 * x[0] / r - 5.0 * x[0]]
    } else {
        [0.0, 0.0]
    }
}

pub fn gresho_pressure(x: Point) -> f64 {
    let (c1, c2) = gresho_constants();
    let r = x[0].hypot(x[1]);
    if r <= 0.2 {
        12.5 * r * r + c1
    } else if r <= 0.4 {
        12.5 * r * r - 20.0 * r + 4.0 * r.ln() + c2
    } else {
        0.0
    }
}

/// `1/2 integral of (curl u)^2` for the standing vortex.
pub fn gresho_enstrophy() -> f64 {
    // vorticity 10 for r < 0.2 and 2/r - 10 in the ring
    let inner = 0.5 * 100.0 * PI * 0.04;
    let ring = PI * (4.0 * (2.0f64).ln() - 40.0 * 0.2 + 50.0 * (0.16 - 0.04));
    inner + ring
}

pub fn gresho() -> BenchmarkSpec {
    BenchmarkSpec {
        name: "gresho",
        domain: Domain::Rectangle(Rect::new(-0.5, 0.5, -0.5, 0.5)),
        h: 1.0 / 48.0,
        nu: 0.0,
        alpha: AlphaRule::Fixed(1.0 / 50.0),
        dt: 0.01,
        end_time: 4.0,
        integrator: Integrator::CrankNicolson,
        boundary: BoundaryKind::NoSlip,
        initial_u: Arc::new(|x, _| gresho_velocity(x)),
        initial_w: None,
        forcing: None,
        analytic: Some(AnalyticSolution {
            u: Some(Arc::new(|x, _| gresho_velocity(x))),
            w: None,
            grad_w: None,
            p: Some(Arc::new(|x, _| gresho_pressure(x))),
        }),
        paper_exact: true,
    }
}

/// Parabolic profile with peak 1 across the 10-unit channel.
pub fn channel_profile(y: f64) -> f64 {
    4.0 * y * (10.0 - y) / 100.0
}

pub fn step_channel() -> BenchmarkSpec {
    BenchmarkSpec {
        name: "step",
        domain: Domain::StepChannel,
        h: 1.0,
        nu: 1.0 / 600.0,
        alpha: AlphaRule::Fixed(0.1),
        dt: 0.025,
        end_time: 40.0,
        integrator: Integrator::CrankNicolson,
        boundary: BoundaryKind::Channel,
        initial_u: Arc::new(|x, _| [channel_profile(x[1]), 0.0]),
        initial_w: None,
        forcing: None,
        analytic: None,
        paper_exact: false,
    }
}

pub const KH_DELTA0: f64 = 1.0 / 28.0;
pub const KH_NOISE: f64 = 1e-3;

/// Viscosity for a given Reynolds number `Re = 1 / (28 nu)`.
pub fn kh_viscosity(re: f64) -> f64 {
    1.0 / (28.0 * re)
}

/// Shear layer plus the curl of the perturbation stream function.
pub fn kh_initial(x: Point) -> [f64; 2] {
    let d = KH_DELTA0;
    let yc = x[1] - 0.5;
    let env = (-(yc * yc) / (d * d)).exp();
    let modes = (8.0 * PI * x[0]).cos() + (20.0 * PI * x[0]).cos();
    let dphi_dy = -2.0 * yc / (d * d) * env * modes;
    let dphi_dx = env * (-8.0 * PI * (8.0 * PI * x[0]).sin() - 20.0 * PI * (20.0 * PI * x[0]).sin());
    [((2.0 * x[1] - 1.0) / d).tanh() + KH_NOISE * dphi_dy, -KH_NOISE * dphi_dx]
}

/// Desk-scale shear-layer instability (`h = 1/16`, `T = 2`).
pub fn kelvin_helmholtz() -> BenchmarkSpec {
    BenchmarkSpec {
        name: "kh",
        domain: Domain::PeriodicX(Rect::unit()),
        h: 1.0 / 16.0,
        nu: kh_viscosity(1000.0),
        alpha: AlphaRule::MeshFraction(1.0 / 3.0),
        dt: 0.001,
        end_time: 2.0,
        integrator: Integrator::Bdf2,
        boundary: BoundaryKind::FreeSlipWalls,
        initial_u: Arc::new(|x, _| kh_initial(x)),
        initial_w: None,
        forcing: None,
        analytic: None,
        paper_exact: false,
    }
}

/// Published shear-layer resolution (`h = 1/48`, `T = 10`).
pub fn kelvin_helmholtz_paper() -> BenchmarkSpec {
    BenchmarkSpec { h: 1.0 / 48.0, end_time: 10.0, paper_exact: true, ..kelvin_helmholtz() }
}

// ------------------------------------------------------------ convergence study

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyAxis {
    Spatial,
    Temporal,
    Hybrid,
}

impl std::str::FromStr for StudyAxis {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spatial" => Ok(StudyAxis::Spatial),
            "temporal" => Ok(StudyAxis::Temporal),
            "hybrid" => Ok(StudyAxis::Hybrid),
            _ => Err(invalid(format!("unknown study axis '{s}'"))),
        }
    }
}

/// Error norms of `w` (L2, H1) and `u` (L2).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorNorms {
    pub l2_w: f64,
    pub h1_w: f64,
    pub l2_u: f64,
}

impl ErrorNorms {
    fn max(self, o: ErrorNorms) -> ErrorNorms {
        ErrorNorms { l2_w: self.l2_w.max(o.l2_w), h1_w: self.h1_w.max(o.h1_w), l2_u: self.l2_u.max(o.l2_u) }
    }

    /// Observed orders `log2(coarse / fine)` for a halving of the parameter.
    pub fn rates(coarse: ErrorNorms, fine: ErrorNorms) -> ErrorNorms {
        let r = |a: f64, b: f64| (a / b).log2();
        ErrorNorms { l2_w: r(coarse.l2_w, fine.l2_w), h1_w: r(coarse.h1_w, fine.h1_w), l2_u: r(coarse.l2_u, fine.l2_u) }
    }
}

/// Errors of one run: the maximum over all time levels (initial one
/// included) and the value at the final time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunErrors {
    pub max: ErrorNorms,
    pub last: ErrorNorms,
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub dt: f64,
    pub errors: RunErrors,
    pub rate_max: Option<ErrorNorms>,
    pub rate_last: Option<ErrorNorms>,
}

/// `(h, dt)` pairs of a study at desk scale.
pub fn study_points(axis: StudyAxis) -> Vec<(f64, f64)> {
    match axis {
        StudyAxis::Spatial => (1..=5).map(|i| (0.5f64.powi(i), 0.005)).collect(),
        StudyAxis::Temporal => (2..=5).map(|i| (1.0 / 32.0, 0.5f64.powi(i))).collect(),
        StudyAxis::Hybrid => (1..=5).map(|i| (0.5f64.powi(i), 0.5f64.powi(i + 1))).collect(),
    }
}

/// Errors of one decaying-vortex run with EMAC-Reg.
pub fn convergence_point(h: f64, dt: f64, end_time: f64) -> Result<RunErrors> {
    let spec = chorin_like().refined(h).with_dt(dt).with_end_time(end_time);
    let (mut stepper, state) = spec.setup(Scheme::EmacReg)?;
    let exact = spec.analytic.clone().expect("analytic data");
    let mut acc = RunErrors::default();
    let mut track = |s: &State| -> Result<()> {
        let (eu, ew, eh) = crate::diagnostics::errors_vs_analytic(s, &exact, s.t)?;
        let e = ErrorNorms { l2_w: ew.unwrap_or(0.0), h1_w: eh.unwrap_or(0.0), l2_u: eu.unwrap_or(0.0) };
        acc = RunErrors { max: acc.max.max(e), last: e };
        Ok(())
    };
    stepper.run(state, end_time, &mut [&mut track])?;
    Ok(acc)
}

/// Rows with observed orders between consecutive entries.
pub fn rate_table(points: &[(f64, f64)], errors: &[RunErrors]) -> Vec<ConvergenceRow> {
    points
        .iter()
        .zip(errors)
        .enumerate()
        .map(|(i, (&(h, dt), &e))| {
            let prev = (i > 0).then(|| errors[i - 1]);
            ConvergenceRow {
                h,
                dt,
                errors: e,
                rate_max: prev.map(|p| ErrorNorms::rates(p.max, e.max)),
                rate_last: prev.map(|p| ErrorNorms::rates(p.last, e.last)),
            }
        })
        .collect()
}

/// Runs the decaying-vortex study along `axis` to `t = 1`.
pub fn convergence_study(axis: StudyAxis) -> Result<Vec<ConvergenceRow>> {
    convergence_study_on(&study_points(axis), 1.0)
}

pub fn convergence_study_on(points: &[(f64, f64)], end_time: f64) -> Result<Vec<ConvergenceRow>> {
    let errors = points.iter().map(|&(h, dt)| convergence_point(h, dt, end_time)).collect::<Result<Vec<_>>>()?;
    Ok(rate_table(points, &errors))
}
