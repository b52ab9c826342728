#![allow(dead_code)]

use std::sync::Arc;

use emacreg::mesh::{build_rectangle_mesh, Rect};
use emacreg::space::{build_space, FeSpace, Field};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// P2 vector and P1 scalar spaces on an `n x n` mesh of `rect`.
pub fn spaces_on(n: usize, rect: Rect) -> (Arc<FeSpace>, Arc<FeSpace>) {
    let m = Arc::new(build_rectangle_mesh(n, n, rect).unwrap());
    (build_space(m.clone(), 2, 2).unwrap(), build_space(m, 1, 1).unwrap())
}

pub fn spaces(n: usize) -> (Arc<FeSpace>, Arc<FeSpace>) {
    spaces_on(n, Rect::unit())
}

/// Random coefficients in `[-1, 1]`, zeroed on the boundary when asked.
pub fn random_field(space: &Arc<FeSpace>, rng: &mut ChaCha8Rng, zero_trace: bool) -> Field {
    let mut c: Vec<f64> = (0..space.num_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
    if zero_trace {
        for m in space.markers().collect::<Vec<_>>() {
            for &n in space.boundary_nodes(m) {
                c[2 * n] = 0.0;
                c[2 * n + 1] = 0.0;
            }
        }
    }
    Field::from_vec(space, c).unwrap()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
