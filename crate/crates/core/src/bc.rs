//! Strong Dirichlet conditions on vector fields.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::mesh::{BoundaryMarker, Point};
use crate::space::FeSpace;

pub type VectorFn = Arc<dyn Fn(Point, f64) -> [f64; 2] + Send + Sync>;

/// Which velocity components a condition pins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Components {
    Both,
    X,
    Y,
}

impl Components {
    fn list(self) -> &'static [usize] {
        match self {
            Components::Both => &[0, 1],
            Components::X => &[0],
            Components::Y => &[1],
        }
    }
}

#[derive(Clone)]
pub struct DirichletCondition {
    pub markers: Vec<BoundaryMarker>,
    pub components: Components,
    pub value: VectorFn,
}

impl fmt::Debug for DirichletCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DirichletCondition")
            .field("markers", &self.markers)
            .field("components", &self.components)
            .finish_non_exhaustive()
    }
}

impl DirichletCondition {
    pub fn new(markers: &[BoundaryMarker], components: Components, value: VectorFn) -> Self {
        DirichletCondition { markers: markers.to_vec(), components, value }
    }

    pub fn homogeneous(markers: &[BoundaryMarker], components: Components) -> Self {
        Self::new(markers, components, Arc::new(|_, _| [0.0, 0.0]))
    }
}

/// A set of Dirichlet conditions; later entries win where they overlap.
#[derive(Debug, Clone, Default)]
pub struct BoundaryConditions {
    pub conditions: Vec<DirichletCondition>,
}

impl BoundaryConditions {
    pub fn new(conditions: Vec<DirichletCondition>) -> Self {
        BoundaryConditions { conditions }
    }

    pub fn none() -> Self {
        Self::default()
    }

    /// Homogeneous no-slip on every marker present in the space.
    pub fn no_slip(space: &FeSpace) -> Self {
        let markers: Vec<_> = space.markers().collect();
        Self::new(vec![DirichletCondition::homogeneous(&markers, Components::Both)])
    }

    /// Constrained dofs with their values at time `t`, sorted by dof.
    pub fn values(&self, space: &FeSpace, t: f64) -> Vec<(usize, f64)> {
        let mut out = BTreeMap::new();
        for cond in &self.conditions {
            for &marker in &cond.markers {
                for &n in space.boundary_nodes(marker) {
                    let v = (cond.value)(space.node_coords()[n], t);
                    for &c in cond.components.list() {
                        out.insert(2 * n + c, v[c]);
                    }
                }
            }
        }
        out.into_iter().collect()
    }

    pub fn dofs(&self, space: &FeSpace) -> Vec<usize> {
        let mut out = std::collections::BTreeSet::new();
        for cond in &self.conditions {
            for &marker in &cond.markers {
                for &n in space.boundary_nodes(marker) {
                    for &c in cond.components.list() {
                        out.insert(2 * n + c);
                    }
                }
            }
        }
        out.into_iter().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty()
    }
}
