//! Exact validity checkers for discrete graphs.
//!
//! These are the ground truth that the differentiable penalties approximate:
//! integer/boolean arithmetic and breadth-first search, no relaxation. They
//! are used to score sampled graphs and to test the penalties.

use serde::{Deserialize, Serialize};

use crate::constraint::{ConstraintError, ConstraintSpec};
use crate::graph::GraphOneHot;

/// Which notion of validity applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// Valence respected, connected, ghosts isolated, at least one real node.
    Molecular,
    /// Ghosts isolated and every edge joins compatible labels; the generator
    /// for this task does not guarantee connectivity, so validity does not
    /// require it.
    NodeCompatible,
}

/// Capacity bookkeeping for one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeValence {
    /// Capacity consumed by incident edges.
    pub load: f64,
    /// Capacity provided by the node's own label.
    pub capacity: f64,
}

impl NodeValence {
    pub fn violation(&self) -> f64 {
        (self.load - self.capacity).max(0.0)
    }

    pub fn passes(&self) -> bool {
        self.violation() == 0.0
    }
}

/// Per-node valence results.
#[derive(Debug, Clone, PartialEq)]
pub struct ValenceReport {
    pub nodes: Vec<NodeValence>,
}

impl ValenceReport {
    pub fn all_pass(&self) -> bool {
        self.nodes.iter().all(NodeValence::passes)
    }

    pub fn total_violation(&self) -> f64 {
        self.nodes.iter().map(NodeValence::violation).sum()
    }
}

/// Per-node edge load versus label capacity. A node passes when its incident
/// edges consume no more capacity than its label provides; a ghost node
/// provides zero, so any incident edge of positive capacity fails it.
pub fn check_valence(
    g: &GraphOneHot,
    spec: &ConstraintSpec,
) -> Result<ValenceReport, ConstraintError> {
    spec.validate_for(g.schema())?;
    let n = g.schema().max_nodes;
    let nodes = (0..n)
        .map(|i| {
            let load = (0..n)
                .filter(|&j| j != i)
                .map(|j| spec.edge_capacity[g.edge_label(i, j)])
                .sum();
            NodeValence {
                load,
                capacity: spec.node_capacity[g.node_label(i)],
            }
        })
        .collect();
    Ok(ValenceReport { nodes })
}

/// True when no ghost node has an incident edge.
pub fn ghosts_isolated(g: &GraphOneHot) -> bool {
    let n = g.schema().max_nodes;
    (0..n).all(|i| !g.is_ghost(i) || g.degree(i) == 0)
}

/// Breadth-first connectivity: every non-ghost node reachable from every
/// other, ghosts isolated. Graphs with zero or one non-ghost node pass
/// (there is no pair to disconnect).
pub fn check_connectivity(g: &GraphOneHot) -> bool {
    if !ghosts_isolated(g) {
        return false;
    }
    let n = g.schema().max_nodes;
    let active: Vec<usize> = (0..n).filter(|&i| !g.is_ghost(i)).collect();
    if active.len() <= 1 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::from([active[0]]);
    seen[active[0]] = true;
    let mut reached = 1;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if j != i && !seen[j] && g.edge_label(i, j) != 0 {
                seen[j] = true;
                reached += 1;
                queue.push_back(j);
            }
        }
    }
    reached == active.len()
}

/// True when every existing edge joins a pair of compatible labels.
pub fn check_compatibility(
    g: &GraphOneHot,
    spec: &ConstraintSpec,
) -> Result<bool, ConstraintError> {
    spec.validate_for(g.schema())?;
    Ok(g.edge_triples().iter().all(|&(i, j, _)| {
        spec.compatibility[g.node_label(i)][g.node_label(j)] == 1.0
    }))
}

/// Validity under the default policy: the all-ghost graph does not count as
/// a valid molecule.
pub fn is_valid(g: &GraphOneHot, spec: &ConstraintSpec, task: Task) -> Result<bool, ConstraintError> {
    is_valid_with(g, spec, task, false)
}

/// Validity with an explicit policy for the all-ghost graph on the molecular
/// task (`empty_is_valid`). The node-compatible task always accepts it.
pub fn is_valid_with(
    g: &GraphOneHot,
    spec: &ConstraintSpec,
    task: Task,
    empty_is_valid: bool,
) -> Result<bool, ConstraintError> {
    match task {
        Task::Molecular => {
            let nonempty = g.active_count() > 0 || empty_is_valid;
            Ok(nonempty && check_valence(g, spec)?.all_pass() && check_connectivity(g))
        }
        Task::NodeCompatible => Ok(ghosts_isolated(g) && check_compatibility(g, spec)?),
    }
}
