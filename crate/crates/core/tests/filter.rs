mod common;

use std::sync::Arc;

use common::*;
use emacreg::bc::{BoundaryConditions, Components, DirichletCondition};
use emacreg::benchmarks::{chorin_analytic, chorin_w};
use emacreg::diagnostics::{filter_energy, integrate_fields, l2_error};
use emacreg::filter::{apply_filter, build_filter};
use emacreg::mesh::BoundaryMarker;
use emacreg::operators::{assemble_mass, assemble_stiffness};
use emacreg::space::interpolate;

const NU: f64 = 0.2;

fn all_sides() -> [BoundaryMarker; 4] {
    [BoundaryMarker::Bottom, BoundaryMarker::Top, BoundaryMarker::Left, BoundaryMarker::Right]
}

/// L2 error of the filtered vortex velocity against the exact filtered field.
fn vortex_filter_error(n: usize) -> (f64, f64) {
    let (v, p) = spaces(n);
    let alpha = 0.5 / n as f64;
    let exact = chorin_analytic(alpha, NU);
    let wbc = BoundaryConditions::new(vec![DirichletCondition::new(&all_sides(), Components::Both, exact.w.clone().unwrap())]);
    let f = build_filter(&v, &p, alpha, &wbc).unwrap();
    let uf = exact.u.clone().unwrap();
    let u = interpolate(&v, |x, t| uf(x, t), 0.0).unwrap();
    let (w, _) = apply_filter(&f, &u).unwrap();
    let div = f.divergence().matvec(&w.coefficients).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    (l2_error(&w, |x| chorin_w(x, 0.0, NU)).unwrap(), div)
}

#[test]
fn vortex_filter_is_third_order() {
    let (coarse, d1) = vortex_filter_error(8);
    let (fine, d2) = vortex_filter_error(16);
    assert!(coarse / fine >= 7.0, "ratio {}", coarse / fine);
    assert!(d1 <= 1e-10 && d2 <= 1e-10);
}

#[test]
fn filter_energy_identity_with_homogeneous_data() {
    let (v, p) = spaces(8);
    let alpha = 1.0 / 16.0;
    let f = build_filter(&v, &p, alpha, &BoundaryConditions::no_slip(&v)).unwrap();
    let u = interpolate(&v, |x, _| [x[1] * (1.0 - x[1]) + x[0], (4.0 * x[0]).sin() * x[1]], 0.0).unwrap();
    let (w, _) = apply_filter(&f, &u).unwrap();
    let lhs = filter_energy(&w, alpha).unwrap();
    let uw = integrate_fields(&[&u, &w], 8, |_, d| d[0].0[0] * d[1].0[0] + d[0].0[1] * d[1].0[1]).unwrap();
    assert!((lhs - uw).abs() <= 1e-10 * uw.abs(), "{lhs} vs {uw}");
    // the same identity in matrix form
    let m = assemble_mass(&v).unwrap();
    let a = assemble_stiffness(&v).unwrap();
    let mw = m.matvec(&w.coefficients);
    let quad = dot(&w.coefficients, &mw) + alpha * alpha * dot(&w.coefficients, &a.matvec(&w.coefficients));
    assert!((quad - dot(&u.coefficients, &mw)).abs() <= 1e-10 * quad.abs());
}

#[test]
fn zero_radius_is_constrained_projection() {
    let (v, p) = spaces(6);
    let f = build_filter(&v, &p, 0.0, &BoundaryConditions::no_slip(&v)).unwrap();
    let mut r = rng(7);
    let u = random_field(&v, &mut r, true);
    let (w, lambda) = apply_filter(&f, &u).unwrap();
    // M (w - u) + B^T lambda vanishes on free rows, and B w = 0
    let m = assemble_mass(&v).unwrap();
    let diff: Vec<f64> = w.coefficients.iter().zip(&u.coefficients).map(|(a, b)| a - b).collect();
    let mut res = m.matvec(&diff);
    let bt = f.divergence().transpose_matvec(&lambda.coefficients);
    res.iter_mut().zip(&bt).for_each(|(x, y)| *x += y);
    let fixed = BoundaryConditions::no_slip(&v).dofs(&v);
    for d in fixed {
        res[d] = 0.0;
    }
    assert!(norm(&res) < 1e-12);
    assert!(norm(&f.divergence().matvec(&w.coefficients)) < 1e-12);
    // a second projection changes nothing
    let (w2, _) = apply_filter(&f, &w).unwrap();
    let d: Vec<f64> = w2.coefficients.iter().zip(&w.coefficients).map(|(a, b)| a - b).collect();
    assert!(norm(&d) < 1e-12);
}

#[test]
fn filter_smooths_high_modes_more() {
    let (v, p) = spaces(16);
    let f = build_filter(&v, &p, 0.1, &BoundaryConditions::no_slip(&v)).unwrap();
    let mode = |k: f64| {
        let u = interpolate(&v, move |x, _| {
            let s = std::f64::consts::PI * k;
            [-(s * x[0]).sin().powi(2) * (2.0 * s * x[1]).sin(), (2.0 * s * x[0]).sin() * (s * x[1]).sin().powi(2)]
        }, 0.0).unwrap();
        let (w, _) = apply_filter(&f, &u).unwrap();
        let m = assemble_mass(&v).unwrap();
        (dot(&w.coefficients, &m.matvec(&w.coefficients)) / dot(&u.coefficients, &m.matvec(&u.coefficients))).sqrt()
    };
    let (low, high) = (mode(1.0), mode(3.0));
    assert!(low < 1.0 && high < low, "{low} {high}");
}

#[test]
fn field_from_another_space_is_rejected() {
    let (v, p) = spaces(2);
    let (v2, _) = spaces(2);
    let f = build_filter(&v, &p, 0.1, &BoundaryConditions::none()).unwrap();
    assert!(apply_filter(&f, &emacreg::space::Field::zeros(&v2)).is_err());
    assert!(!Arc::ptr_eq(&v, &v2));
}
