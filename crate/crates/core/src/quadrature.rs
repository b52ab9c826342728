//! Symmetric triangle quadrature (Dunavant-type rules).
//!
//! Points are barycentric; weights sum to one and are scaled by the triangle
//! area at the point of use.

use crate::error::{invalid, Result};

pub const MAX_ORDER: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Integral of `f(x, y)` over the reference triangle `(0,0), (1,0), (0,1)`.
    pub fn integrate_reference(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        0.5 * self.points.iter().zip(&self.weights).map(|(p, w)| w * f(p[1], p[2])).sum::<f64>()
    }
}

struct Builder {
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl Builder {
    fn new() -> Self {
        Builder { points: Vec::new(), weights: Vec::new() }
    }

    fn centroid(mut self, w: f64) -> Self {
        let c = 1.0 / 3.0;
        self.points.push([c, c, c]);
        self.weights.push(w);
        self
    }

    fn s21(mut self, a: f64, w: f64) -> Self {
        let b = 1.0 - 2.0 * a;
        for p in [[a, a, b], [a, b, a], [b, a, a]] {
            self.points.push(p);
            self.weights.push(w);
        }
        self
    }

    fn s111(mut self, a: f64, b: f64, w: f64) -> Self {
        let c = 1.0 - a - b;
        for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
            self.points.push(p);
            self.weights.push(w);
        }
        self
    }

    fn build(self, degree: usize) -> QuadratureRule {
        QuadratureRule { points: self.points, weights: self.weights, degree }
    }
}

/// Rule exact for polynomials of total degree `order` (at least).
pub fn quadrature(order: usize) -> Result<QuadratureRule> {
    let rule = match order {
        0 | 1 => Builder::new().centroid(1.0).build(1),
        2 => Builder::new().s21(1.0 / 6.0, 1.0 / 3.0).build(2),
        3 | 4 => Builder::new()
            .s21(0.445948490915964886318, 0.223381589678011465695)
            .s21(0.0915762135097707434596, 0.109951743655321867638)
            .build(4),
        5 => Builder::new()
            .centroid(0.225)
            .s21(0.47014206410511508977, 0.132394152788506180738)
            .s21(0.101286507323456338801, 0.125939180544827152596)
            .build(5),
        6 => Builder::new()
            .s21(0.249286745170910421292, 0.116786275726379366025)
            .s21(0.0630890144915022283403, 0.0508449063702068169209)
            .s111(0.0531450498448169473532, 0.310352451033784405417, 0.0828510756183735751936)
            .build(6),
        7 | 8 => Builder::new()
            .centroid(0.144315607677787168251)
            .s21(0.459292588292723156029, 0.0950916342672846247939)
            .s21(0.170569307751760206622, 0.103217370534718250282)
            .s21(0.0505472283170309754584, 0.0324584976231980803109)
            .s111(0.00839477740995760533721, 0.263112829634638113422, 0.0272303141744349942648)
            .build(8),
        _ => return Err(invalid(format!("no quadrature rule of order {order} (max {MAX_ORDER})"))),
    };
    Ok(rule)
}

#[cfg(test)]
mod tests {
    use super::*;

    // exact integral of x^i y^j over the reference triangle: i! j! / (i+j+2)!
    fn monomial(i: u32, j: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        fact(i) * fact(j) / fact(i + j + 2)
    }

    #[test]
    fn order_one_is_centroid() {
        let q = quadrature(1).unwrap();
        assert_eq!(q.len(), 1);
        assert_eq!(q.weights[0], 1.0);
        assert!(q.points[0].iter().all(|&l| (l - 1.0 / 3.0).abs() < 1e-16));
    }

    #[test]
    fn order_four_x2y2() {
        let q = quadrature(4).unwrap();
        let v = q.integrate_reference(|x, y| x * x * y * y);
        assert!((v - 1.0 / 180.0).abs() < 1e-15, "{v}");
    }

    #[test]
    fn all_rules_exact_to_degree() {
        for order in 1..=MAX_ORDER {
            let q = quadrature(order).unwrap();
            assert!(q.degree >= order);
            let wsum: f64 = q.weights.iter().sum();
            assert!((wsum - 1.0).abs() < 1e-15);
            for p in &q.points {
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
                assert!(p.iter().all(|&l| l > 0.0));
            }
            for i in 0..=order as u32 {
                for j in 0..=(order as u32 - i) {
                    let v = q.integrate_reference(|x, y| x.powi(i as i32) * y.powi(j as i32));
                    let e = monomial(i, j);
                    assert!((v - e).abs() < 1e-14 * e.max(1e-3), "order {order} x^{i} y^{j}: {v} vs {e}");
                }
            }
        }
    }

    #[test]
    fn unsupported_order() {
        assert!(quadrature(9).is_err());
    }
}
