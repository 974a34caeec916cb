//! Validity-constraint parameters shared by the differentiable penalties and
//! the exact checkers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::GraphSchema;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("invalid constraint spec: {0}")]
    Invalid(String),
    #[error("constraint spec does not fit schema: {0}")]
    SchemaMismatch(String),
}

/// Default slack for the compatibility constraint.
pub const DEFAULT_ALPHA: f64 = 0.25;

/// Default gain of the sharpened sigmoid used by the connectivity penalty.
pub const DEFAULT_SHARPNESS: f64 = 100.0;

/// Pairwise compatibility of the five node labels used by the synthetic
/// node-compatible task, with the ghost row and column (index 0) included.
pub const COMPATIBILITY_5: [[f64; 6]; 6] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 1.0, 1.0, 0.0],
    [0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
    [0.0, 1.0, 1.0, 0.0, 1.0, 1.0],
    [0.0, 1.0, 0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 1.0, 0.0, 0.0],
];

/// Parameters of the three validity constraints.
///
/// `edge_capacity[k]` is how much capacity an edge of type `k` consumes at
/// each endpoint and `node_capacity[r]` is how much a node of type `r`
/// provides; both are zero at index 0 ("nonexistent"). `compatibility` is a
/// symmetric 0/1 matrix over node types with a zero ghost row and column,
/// `alpha` the slack of the compatibility constraint and `sharpness` the gain
/// of the sigmoid inside the connectivity penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub edge_capacity: Vec<f64>,
    pub node_capacity: Vec<f64>,
    pub compatibility: Vec<Vec<f64>>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_sharpness")]
    pub sharpness: f64,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_sharpness() -> f64 {
    DEFAULT_SHARPNESS
}

impl ConstraintSpec {
    /// Molecular constraints: edge type `k` consumes `k` capacity units
    /// (single/double/triple bond) and `valences[r-1]` is the capacity of
    /// node type `r`. All real node types are mutually compatible.
    pub fn molecular(valences: &[f64], edge_types: usize) -> Self {
        let d = valences.len();
        let mut edge_capacity = vec![0.0];
        edge_capacity.extend((1..=edge_types).map(|k| k as f64));
        let mut node_capacity = vec![0.0];
        node_capacity.extend_from_slice(valences);
        let compatibility = (0..=d)
            .map(|r| {
                (0..=d)
                    .map(|s| if r == 0 || s == 0 { 0.0 } else { 1.0 })
                    .collect()
            })
            .collect();
        ConstraintSpec {
            edge_capacity,
            node_capacity,
            compatibility,
            alpha: DEFAULT_ALPHA,
            sharpness: DEFAULT_SHARPNESS,
        }
    }

    /// Generic-graph constraints for the node-compatible task: one edge type
    /// consuming one unit, every real node type providing `N - 1` units (so
    /// valence never binds and only the ghost rule remains), and the given
    /// compatibility matrix (ghost row/column included).
    pub fn node_compatible(max_nodes: usize, compatibility: Vec<Vec<f64>>) -> Self {
        let d = compatibility.len().saturating_sub(1);
        let mut node_capacity = vec![0.0];
        node_capacity.extend(std::iter::repeat((max_nodes - 1) as f64).take(d));
        ConstraintSpec {
            edge_capacity: vec![0.0, 1.0],
            node_capacity,
            compatibility,
            alpha: DEFAULT_ALPHA,
            sharpness: DEFAULT_SHARPNESS,
        }
    }

    /// The node-compatible task with its standard five-label matrix.
    pub fn node_compatible_default(max_nodes: usize) -> Self {
        let compat = COMPATIBILITY_5.iter().map(|row| row.to_vec()).collect();
        Self::node_compatible(max_nodes, compat)
    }

    /// Node-type count `d` implied by the capacity table.
    pub fn node_types(&self) -> usize {
        self.node_capacity.len().saturating_sub(1)
    }

    /// Edge-type count `t` implied by the capacity table.
    pub fn edge_types(&self) -> usize {
        self.edge_capacity.len().saturating_sub(1)
    }

    /// Check internal invariants.
    pub fn validate(&self) -> Result<(), ConstraintError> {
        if self.edge_capacity.is_empty() || self.edge_capacity[0] != 0.0 {
            return Err(ConstraintError::Invalid(
                "edge_capacity must start with 0 for the nonexistent type".into(),
            ));
        }
        if self.node_capacity.is_empty() || self.node_capacity[0] != 0.0 {
            return Err(ConstraintError::Invalid(
                "node_capacity must start with 0 for the ghost type".into(),
            ));
        }
        if self.edge_capacity.iter().any(|&h| h < 0.0 || !h.is_finite()) {
            return Err(ConstraintError::Invalid(
                "edge capacities must be finite and nonnegative".into(),
            ));
        }
        if self.node_capacity.iter().any(|&u| u < 0.0 || !u.is_finite()) {
            return Err(ConstraintError::Invalid(
                "node capacities must be finite and nonnegative".into(),
            ));
        }
        let m = self.compatibility.len();
        if m != self.node_capacity.len() {
            return Err(ConstraintError::Invalid(format!(
                "compatibility matrix has {m} rows but there are {} node types (need {})",
                self.node_types(),
                self.node_capacity.len()
            )));
        }
        for (r, row) in self.compatibility.iter().enumerate() {
            if row.len() != m {
                return Err(ConstraintError::Invalid(format!(
                    "compatibility row {r} has length {} (need {m})",
                    row.len()
                )));
            }
            for (s, &v) in row.iter().enumerate() {
                if v != 0.0 && v != 1.0 {
                    return Err(ConstraintError::Invalid(format!(
                        "compatibility({r},{s}) = {v}; entries must be 0 or 1"
                    )));
                }
                if (r == 0 || s == 0) && v != 0.0 {
                    return Err(ConstraintError::Invalid(format!(
                        "compatibility({r},{s}) must be 0: ghosts are incompatible"
                    )));
                }
                if (v - self.compatibility[s][r]).abs() != 0.0 {
                    return Err(ConstraintError::Invalid(format!(
                        "compatibility matrix asymmetric at ({r},{s})"
                    )));
                }
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ConstraintError::Invalid(format!(
                "alpha = {}; must lie strictly between 0 and 1",
                self.alpha
            )));
        }
        if !(self.sharpness > 0.0) || !self.sharpness.is_finite() {
            return Err(ConstraintError::Invalid(format!(
                "sharpness = {}; must be finite and positive",
                self.sharpness
            )));
        }
        Ok(())
    }

    /// Check invariants and that the tables fit the given schema.
    pub fn validate_for(&self, schema: GraphSchema) -> Result<(), ConstraintError> {
        self.validate()?;
        if self.node_types() != schema.node_types {
            return Err(ConstraintError::SchemaMismatch(format!(
                "spec covers {} node types, schema has {}",
                self.node_types(),
                schema.node_types
            )));
        }
        if self.edge_types() != schema.edge_types {
            return Err(ConstraintError::SchemaMismatch(format!(
                "spec covers {} edge types, schema has {}",
                self.edge_types(),
                schema.edge_types
            )));
        }
        Ok(())
    }
}
