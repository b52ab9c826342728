mod common;

use std::sync::Arc;

use common::*;
use emacreg::bc::{BoundaryConditions, Components, DirichletCondition, VectorFn};
use emacreg::benchmarks::{chorin_like, gresho, gresho_velocity};
use emacreg::diagnostics::conserved_quantities;
use emacreg::mesh::{BoundaryMarker, Point};
use emacreg::schemes::{ForcingFn, Integrator, Scheme, State, Stepper, StepperConfig};
use emacreg::space::{interpolate, Field};
use emacreg::Error;

const SIDES: [BoundaryMarker; 4] = [BoundaryMarker::Bottom, BoundaryMarker::Top, BoundaryMarker::Left, BoundaryMarker::Right];

/// Harmonic, divergence-free quadratic scaled linearly in time.
fn mms_u(x: Point, t: f64) -> [f64; 2] {
    let s = 1.0 + 0.5 * t;
    [s * (x[0] * x[0] - x[1] * x[1] + x[1]), s * (-2.0 * x[0] * x[1] + x[0])]
}

fn mms_grad(x: Point, t: f64) -> [[f64; 2]; 2] {
    let s = 1.0 + 0.5 * t;
    [[s * 2.0 * x[0], s * (1.0 - 2.0 * x[1])], [s * (1.0 - 2.0 * x[1]), -s * 2.0 * x[0]]]
}

fn mms_p(x: Point, t: f64) -> f64 {
    (1.0 + t) * (x[0] - 0.5) + 0.3 * (x[1] - 0.5)
}

/// Pointwise convective term of each scheme for `u = w`, derived by hand.
fn mms_convection(scheme: Scheme, x: Point, t: f64) -> [f64; 2] {
    let w = mms_u(x, t);
    let g = mms_grad(x, t);
    let adv = [w[0] * g[0][0] + w[1] * g[0][1], w[0] * g[1][0] + w[1] * g[1][1]];
    match scheme {
        Scheme::Skew => adv,
        // 2 D(w) w with div w = 0
        Scheme::Emac | Scheme::EmacReg => {
            let sym = [w[0] * g[0][0] + w[1] * g[1][0], w[0] * g[0][1] + w[1] * g[1][1]];
            [adv[0] + sym[0], adv[1] + sym[1]]
        }
        Scheme::NsAlpha => {
            let om = g[1][0] - g[0][1];
            [-om * w[1], om * w[0]]
        }
    }
}

fn mms_forcing(scheme: Scheme, nu: f64) -> ForcingFn {
    let _ = nu; // the field is harmonic, so viscosity adds nothing
    Arc::new(move |x, t| {
        let ut = [0.5 * (x[0] * x[0] - x[1] * x[1] + x[1]), 0.5 * (-2.0 * x[0] * x[1] + x[0])];
        let n = mms_convection(scheme, x, t);
        let gp = [1.0 + t, 0.3];
        [ut[0] + n[0] + gp[0], ut[1] + n[1] + gp[1]]
    })
}

fn analytic_bc() -> BoundaryConditions {
    let g: VectorFn = Arc::new(mms_u);
    BoundaryConditions::new(vec![DirichletCondition::new(&SIDES, Components::Both, g)])
}

fn mms_stepper(scheme: Scheme, integrator: Integrator, n: usize) -> Stepper {
    let (v, p) = spaces(n);
    let nu = 0.3;
    let mut cfg = StepperConfig::new(scheme, integrator, 0.1, nu, if scheme.is_filtered() { 0.2 } else { 0.0 });
    cfg.forcing = Some(mms_forcing(scheme, nu));
    Stepper::new(cfg, v, p, analytic_bc(), analytic_bc()).unwrap()
}

/// Exact data at `t`; `tp` is the time the pressure belongs to.
fn exact_state_at(st: &Stepper, t: f64, tp: f64) -> State {
    let u = interpolate(st.velocity_space(), mms_u, t).unwrap();
    let p = interpolate(st.pressure_space(), mms_p, tp).unwrap();
    let lambda = st.config().scheme.is_filtered().then(|| Field::zeros(st.pressure_space()));
    State { t, w: u.clone(), u, p, lambda, multipliers: [0.0; 2] }
}

fn exact_state(st: &Stepper, t: f64) -> State {
    exact_state_at(st, t, t)
}

#[test]
fn manufactured_solution_has_zero_residual() {
    for scheme in Scheme::ALL {
        let mut st = mms_stepper(scheme, Integrator::CrankNicolson, 2);
        // the Crank-Nicolson pressure lives at the midpoint
        let r = st.residual(&exact_state_at(&st, 0.1, 0.05), &exact_state(&st, 0.0), None).unwrap();
        assert!(r.iter().all(|x| x.abs() < 1e-11), "{scheme:?} CN: {:e}", r.iter().fold(0.0f64, |m, x| m.max(x.abs())));

        let mut st = mms_stepper(scheme, Integrator::Bdf2, 2);
        let r = st.residual(&exact_state(&st, 0.2), &exact_state(&st, 0.1), Some(&exact_state(&st, 0.0))).unwrap();
        assert!(r.iter().all(|x| x.abs() < 1e-11), "{scheme:?} BDF2");
    }
}

#[test]
fn manufactured_solution_is_reproduced_by_stepping() {
    let mut st = mms_stepper(Scheme::EmacReg, Integrator::Bdf2, 3);
    let s0 = exact_state(&st, 0.0);
    let end = st.run(s0, 0.5, &mut []).unwrap();
    let exact = exact_state(&st, end.t);
    let d: Vec<f64> = end.u.coefficients.iter().zip(&exact.u.coefficients).map(|(a, b)| a - b).collect();
    assert!(norm(&d) < 1e-9);
    let dp: Vec<f64> = end.p.coefficients.iter().zip(&exact.p.coefficients).map(|(a, b)| a - b).collect();
    assert!(norm(&dp) < 1e-8);
}

#[test]
fn zero_state_has_zero_residual() {
    for scheme in Scheme::ALL {
        let (v, p) = spaces(3);
        let cfg = StepperConfig::new(scheme, Integrator::CrankNicolson, 0.01, 0.1, 0.05);
        let bc = BoundaryConditions::no_slip(&v);
        let mut st = Stepper::new(cfg, v, p, bc.clone(), bc).unwrap();
        let z = st.initial_state(|_| [0.0, 0.0]).unwrap();
        assert!(z.u.coefficients.iter().chain(&z.w.coefficients).all(|&x| x == 0.0));
        let r = st.residual(&z, &z, None).unwrap();
        assert!(r.iter().all(|&x| x == 0.0), "{scheme:?}");
    }
}

#[test]
fn newton_system_dimension() {
    let (v, p) = spaces(2);
    let cfg = StepperConfig::new(Scheme::EmacReg, Integrator::CrankNicolson, 0.1, 1.0, 0.1);
    let bc = BoundaryConditions::no_slip(&v);
    let st = Stepper::new(cfg, v.clone(), p.clone(), bc.clone(), bc).unwrap();
    // num_dofs already counts both velocity components
    assert_eq!(st.layout().len(), v.num_dofs() + p.num_dofs() + v.num_dofs() + p.num_dofs() + 2);
    assert_eq!(v.num_dofs(), 2 * 25);
}

#[test]
fn gradient_forcing_is_solved_in_one_iteration() {
    let (v, p) = spaces(4);
    let mut cfg = StepperConfig::new(Scheme::EmacReg, Integrator::CrankNicolson, 0.05, 0.1, 0.1);
    cfg.forcing = Some(Arc::new(|_, _| [2.0, -1.0]));
    cfg.newton_tol = 1e-11;
    let bc = BoundaryConditions::no_slip(&v);
    let mut st = Stepper::new(cfg, v, p, bc.clone(), bc).unwrap();
    let s0 = st.initial_state(|_| [0.0, 0.0]).unwrap();
    let s1 = st.advance(&s0, None).unwrap();
    assert_eq!(st.last_report().iterations(), 1);
    assert!(s1.u.coefficients.iter().all(|x| x.abs() < 1e-11));
    // the pressure absorbs the potential 2x - y, normalized to mean zero
    let q = interpolate(st.pressure_space(), |x, _| 2.0 * x[0] - x[1] - 0.5, 0.0).unwrap();
    let d: Vec<f64> = s1.p.coefficients.iter().zip(&q.coefficients).map(|(a, b)| a - b).collect();
    assert!(norm(&d) < 1e-10, "{}", norm(&d));
}

fn gresho_stepper(n: usize, scheme: Scheme, reuse: bool) -> (Stepper, State) {
    let spec = gresho().with_h(1.0 / n as f64);
    let mut cfg = spec.stepper_config(scheme);
    cfg.reuse_jacobian = reuse;
    spec.setup_with(cfg).unwrap()
}

#[test]
fn gresho_newton_converges_in_three_iterations() {
    let (mut st, s0) = gresho_stepper(24, Scheme::EmacReg, false);
    let mut s = s0;
    for _ in 0..3 {
        s = st.advance(&s, None).unwrap();
        let rep = st.last_report();
        assert!(rep.iterations() <= 3, "{:?}", rep.residuals);
        assert!(*rep.residuals.last().unwrap() <= 1e-10);
    }
}

#[test]
fn newton_converges_quadratically() {
    let (mut st, s0) = gresho_stepper(12, Scheme::EmacReg, false);
    let mut guess = s0.clone();
    guess.t += st.config().dt;
    let mut norms = vec![st.residual(&guess, &s0, None).unwrap().iter().fold(0.0f64, |m, x| m.max(x.abs()))];
    for _ in 0..3 {
        let (next, r) = st.newton_step(&guess, &s0, None).unwrap();
        norms.push(r);
        guess = next;
        if r < 1e-13 {
            break;
        }
    }
    let k = norms.iter().rposition(|&r| r > 1e-13).unwrap();
    assert!(k >= 1, "{norms:?}");
    assert!(norms[k] <= 10.0 * norms[k - 1].powi(2), "{norms:?}");
}

#[test]
fn crank_nicolson_conserves_discrete_energy() {
    let (mut st, s0) = gresho_stepper(12, Scheme::EmacReg, true);
    let (e0, m0, a0) = conserved_quantities(&s0).unwrap();
    let mut s = s0;
    for _ in 0..5 {
        s = st.advance(&s, None).unwrap();
    }
    let (e, m, a) = conserved_quantities(&s).unwrap();
    let tol = 10.0 * st.config().newton_tol;
    assert!((e - e0).abs() <= tol, "{e} vs {e0}");
    assert!((m[0] - m0[0]).abs() <= tol && (m[1] - m0[1]).abs() <= tol);
    // angular momentum picks up boundary-layer contributions from the walls
    assert!((a - a0).abs() <= 1e-3 * a0.abs());
}

fn vortex_stepper(dt: f64) -> (Stepper, State) {
    let spec = chorin_like().refined(0.25).with_dt(dt);
    let mut cfg = spec.stepper_config(Scheme::EmacReg);
    cfg.newton_tol = 1e-13;
    spec.setup_with(cfg).unwrap()
}

#[test]
fn crank_nicolson_local_error_is_third_order() {
    // Crank-Nicolson does not damp stiff modes, so small steps first remove
    // the mesh-scale part of the projected initial data
    let (mut warm, s0) = vortex_stepper(1e-3);
    let start = warm.run(s0, 0.1, &mut []).unwrap();
    let one_step_error = |dt: f64| {
        let (mut st, _) = vortex_stepper(dt);
        let coarse = st.advance(&start, None).unwrap();
        let (mut fine, _) = vortex_stepper(dt / 64.0);
        let reference = fine.run(start.clone(), start.t + dt, &mut []).unwrap();
        let d: Vec<f64> = coarse.w.coefficients.iter().zip(&reference.w.coefficients).map(|(a, b)| a - b).collect();
        norm(&d)
    };
    let ratio = one_step_error(0.025) / one_step_error(0.0125);
    assert!(ratio > 6.0, "ratio {ratio}");
}

#[test]
fn bdf2_preserves_steady_solution() {
    let steady: fn(Point, f64) -> [f64; 2] = |x, _| mms_u(x, 0.0);
    let (v, p) = spaces(3);
    let nu = 0.05;
    let mut cfg = StepperConfig::new(Scheme::EmacReg, Integrator::Bdf2, 0.1, nu, 0.1);
    cfg.forcing = Some(Arc::new(move |x, _| {
        let n = mms_convection(Scheme::EmacReg, x, 0.0);
        [n[0] + 1.0, n[1] + 0.3]
    }));
    let g: VectorFn = Arc::new(steady);
    let bc = BoundaryConditions::new(vec![DirichletCondition::new(&SIDES, Components::Both, g)]);
    let mut st = Stepper::new(cfg, v, p, bc.clone(), bc).unwrap();
    let s0 = st.initial_state_interpolated(|x| steady(x, 0.0), |x| steady(x, 0.0)).unwrap();
    let end = st.run(s0.clone(), 1.0, &mut []).unwrap();
    let d: Vec<f64> = end.u.coefficients.iter().zip(&s0.u.coefficients).map(|(a, b)| a - b).collect();
    assert!(norm(&d) < 1e-9, "{}", norm(&d));
}

#[test]
fn bdf2_residual_needs_history() {
    let mut st = mms_stepper(Scheme::EmacReg, Integrator::Bdf2, 2);
    let s = exact_state(&st, 0.0);
    assert!(matches!(st.residual(&s, &s, None), Err(Error::State(_))));
}

#[test]
fn invalid_configurations_are_rejected() {
    let (v, p) = spaces(2);
    let bc = BoundaryConditions::none();
    for (dt, nu, alpha) in [(0.0, 1.0, 0.1), (0.1, -1.0, 0.1), (0.1, 1.0, -0.1), (f64::NAN, 1.0, 0.1)] {
        let cfg = StepperConfig::new(Scheme::EmacReg, Integrator::CrankNicolson, dt, nu, alpha);
        assert!(matches!(Stepper::new(cfg, v.clone(), p.clone(), bc.clone(), bc.clone()), Err(Error::InvalidArgument(_))));
    }
}

#[test]
fn steady_gresho_is_a_fixed_point_of_emac() {
    let (mut st, s0) = gresho_stepper(12, Scheme::Emac, true);
    let s1 = st.advance(&s0, None).unwrap();
    let r = st.residual(&s1, &s0, None).unwrap();
    assert!(r.iter().fold(0.0f64, |m, x| m.max(x.abs())) <= st.config().newton_tol);
    assert!((gresho_velocity([0.2, 0.0])[1] - 1.0).abs() < 1e-14);
}
