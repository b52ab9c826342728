//! Discrete Helmholtz filter with a divergence constraint.
//!
//! Given `u`, find `(w, lambda)` with
//! `(lambda, div chi) + alpha^2 (grad w, grad chi) + (w, chi) = (u, chi)` and
//! `(div w, r) = 0`. The multiplier is fixed to mean zero by one extra scalar
//! unknown, and the system is factored once per filter.

use std::sync::Arc;

use crate::bc::BoundaryConditions;
use crate::error::{invalid, Result};
use crate::operators::{assemble_divergence, assemble_mass, assemble_stiffness, mean_vector};
use crate::space::{FeSpace, Field};
use crate::sparse::{block_compose, factor, Factorization, SparseMatrix};

/// Zeroes rows and columns of `dofs` and puts 1 on their diagonal.
pub(crate) fn eliminate_symmetric(k: &SparseMatrix, dofs: &[usize]) -> SparseMatrix {
    let mut fixed = vec![false; k.nrows()];
    for &d in dofs {
        fixed[d] = true;
    }
    let mut out = k.clone();
    let row_ptr = out.row_ptr().to_vec();
    let cols = out.col_idx().to_vec();
    let vals = out.values_mut();
    for i in 0..row_ptr.len() - 1 {
        for p in row_ptr[i]..row_ptr[i + 1] {
            let j = cols[p];
            if fixed[i] || fixed[j] {
                vals[p] = if i == j { 1.0 } else { 0.0 };
            }
        }
    }
    out
}

/// Column vector `m` as an `n x 1` sparse matrix.
pub(crate) fn column(m: &[f64]) -> SparseMatrix {
    let rows: Vec<usize> = (0..m.len()).collect();
    SparseMatrix::from_triplets(&rows, &vec![0; m.len()], m, (m.len(), 1)).expect("column in range")
}

pub struct FilterSystem {
    alpha: f64,
    vel: Arc<FeSpace>,
    pres: Arc<FeSpace>,
    bc: BoundaryConditions,
    mass: SparseMatrix,
    divergence: SparseMatrix,
    /// Saddle matrix before Dirichlet elimination (used for lifting).
    matrix: SparseMatrix,
    constrained: SparseMatrix,
    lu: Factorization,
}

impl std::fmt::Debug for FilterSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FilterSystem").field("alpha", &self.alpha).field("dim", &self.matrix.nrows()).finish()
    }
}

/// Builds and factors `[[alpha^2 A + M, B^T, 0], [B, 0, m], [0, m^T, 0]]`
/// with the Dirichlet conditions of `bc` on `w`.
pub fn build_filter(
    vel: &Arc<FeSpace>,
    pres: &Arc<FeSpace>,
    alpha: f64,
    bc: &BoundaryConditions,
) -> Result<FilterSystem> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(invalid(format!("filter radius must be non-negative, got {alpha}")));
    }
    if !vel.same_mesh(pres) {
        return Err(invalid("velocity and pressure spaces are on different meshes"));
    }
    let mass = assemble_mass(vel)?;
    let stiff = assemble_stiffness(vel)?;
    let divergence = assemble_divergence(vel, pres)?;
    let helm = stiff.linear_combination(alpha * alpha, &mass, 1.0)?;
    let bt = divergence.transpose();
    let m = column(&mean_vector(pres)?);
    let mt = m.transpose();
    let matrix = block_compose(&[
        vec![Some(&helm), Some(&bt), None],
        vec![Some(&divergence), None, Some(&m)],
        vec![None, Some(&mt), Some(&SparseMatrix::zeros(1, 1))],
    ])?;
    let constrained = eliminate_symmetric(&matrix, &bc.dofs(vel));
    let lu = factor(&constrained)?;
    Ok(FilterSystem {
        alpha,
        vel: vel.clone(),
        pres: pres.clone(),
        bc: bc.clone(),
        mass,
        divergence,
        matrix,
        constrained,
        lu,
    })
}

impl FilterSystem {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Saddle-point matrix with the boundary rows replaced.
    #[allow(clippy::misnamed_getters)]
    pub fn matrix(&self) -> &SparseMatrix {
        &self.constrained
    }

    pub fn velocity_space(&self) -> &Arc<FeSpace> {
        &self.vel
    }

    pub fn pressure_space(&self) -> &Arc<FeSpace> {
        &self.pres
    }

    pub fn divergence(&self) -> &SparseMatrix {
        &self.divergence
    }

    /// Filters `u`, with boundary data for `w` evaluated at time `t`.
    pub fn apply_at(&self, u: &Field, t: f64) -> Result<(Field, Field)> {
        if !Arc::ptr_eq(&u.space, &self.vel) {
            return Err(invalid("field is not on the filter's velocity space"));
        }
        let nu = self.vel.num_dofs();
        let np = self.pres.num_dofs();
        let mut rhs = vec![0.0; self.dim()];
        self.mass.matvec_into(&u.coefficients, &mut rhs[..nu]);
        let fixed = self.bc.values(&self.vel, t);
        if !fixed.is_empty() {
            let mut g = vec![0.0; self.dim()];
            for &(d, v) in &fixed {
                g[d] = v;
            }
            self.matrix.matvec_add(-1.0, &g, &mut rhs);
            for &(d, v) in &fixed {
                rhs[d] = v;
            }
        }
        let x = self.lu.solve(&rhs)?;
        let w = Field::from_vec(&self.vel, x[..nu].to_vec())?;
        let lambda = Field::from_vec(&self.pres, x[nu..nu + np].to_vec())?;
        Ok((w, lambda))
    }
}

/// Filters `u` with boundary data at `t = 0`.
pub fn apply_filter(system: &FilterSystem, u: &Field) -> Result<(Field, Field)> {
    system.apply_at(u, 0.0)
}
