//! Differentiable validity penalties.
//!
//! Each constraint family maps a probabilistic graph to per-node or per-pair
//! penalty values `g`; the constraint "holds" when `g <= 0`, and the training
//! loss adds the ramped values `max(g, 0)`. All three are built as tape
//! expressions over the node-probability matrix and edge-probability tensor
//! so gradients flow back into whatever produced them (typically the
//! decoder).
//!
//! On one-hot inputs the ramped penalties agree with the exact checkers in
//! [`crate::oracles`]: valence reproduces the violation magnitude exactly,
//! connectivity approaches the breadth-first-search verdict to within the
//! resolution of its sharpened sigmoid, and compatibility flags exactly the
//! edges joining incompatible labels.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{ConstraintError, ConstraintSpec};
use crate::graph::{GraphProb, GraphSchema};
use crate::tape::{Tape, Var};
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error)]
pub enum PenaltyError {
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("graph tensor shape {got:?} does not fit schema (expected {expected:?})")]
    BadShape { expected: Vec<usize>, got: Vec<usize> },
    #[error("no constraint family enabled: all regularization weights are zero")]
    NothingEnabled,
    #[error("invalid regularization weights: {0}")]
    BadWeights(String),
}

/// A probabilistic graph whose tensors live on a tape.
///
/// Unlike [`GraphProb`] this type only checks shapes, not the simplex and
/// symmetry invariants: intermediate decoder outputs and finite-difference
/// probes are allowed to be slightly off the constraint surface.
#[derive(Clone)]
pub struct GraphProbVar {
    schema: GraphSchema,
    f: Var,
    e: Var,
}

impl GraphProbVar {
    pub fn from_parts(schema: GraphSchema, f: Var, e: Var) -> Result<Self, PenaltyError> {
        let n = schema.max_nodes;
        let f_shape = vec![n, schema.node_channels()];
        if f.shape() != f_shape {
            return Err(PenaltyError::BadShape {
                expected: f_shape,
                got: f.shape(),
            });
        }
        let e_shape = vec![n, n, schema.edge_channels()];
        if e.shape() != e_shape {
            return Err(PenaltyError::BadShape {
                expected: e_shape,
                got: e.shape(),
            });
        }
        Ok(GraphProbVar { schema, f, e })
    }

    /// Put a validated graph on the tape as a constant input.
    pub fn constant(tape: &Tape, m: &GraphProb) -> Self {
        GraphProbVar {
            schema: m.schema(),
            f: tape.constant(m.node_probs().clone()),
            e: tape.constant(m.edge_probs().clone()),
        }
    }

    /// Put a validated graph on the tape as trainable leaves, so that
    /// [`crate::tape::backward`] reports gradients with respect to both
    /// tensors.
    pub fn leaf(tape: &Tape, m: &GraphProb) -> Self {
        GraphProbVar {
            schema: m.schema(),
            f: tape.leaf(m.node_probs().clone()),
            e: tape.leaf(m.edge_probs().clone()),
        }
    }

    pub fn schema(&self) -> GraphSchema {
        self.schema
    }

    /// Node probabilities, `[N, 1 + d]`.
    pub fn f(&self) -> &Var {
        &self.f
    }

    /// Edge probabilities, `[N, N, 1 + t]`.
    pub fn e(&self) -> &Var {
        &self.e
    }
}

/// One shared weight per constraint family; a family with weight zero is
/// skipped entirely (and families missing from a config file default to
/// zero).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegWeights {
    pub valence: f64,
    pub connectivity: f64,
    pub compatibility: f64,
}

impl Default for RegWeights {
    /// All families off; regularization is strictly opt-in.
    fn default() -> Self {
        RegWeights::none()
    }
}

impl RegWeights {
    /// Molecular defaults for small molecules: valence and connectivity.
    pub fn molecular() -> Self {
        RegWeights {
            valence: 1.0,
            connectivity: 1.0,
            compatibility: 0.0,
        }
    }

    /// Molecular defaults for larger molecules, where many more terms enter
    /// the penalty sums and a lighter weight balances them.
    pub fn molecular_large() -> Self {
        RegWeights {
            valence: 0.05,
            connectivity: 0.05,
            compatibility: 0.0,
        }
    }

    /// Node-compatible-task defaults: ghost-node (generic valence) and
    /// compatibility.
    pub fn node_compatible() -> Self {
        RegWeights {
            valence: 5.0,
            connectivity: 0.0,
            compatibility: 5.0,
        }
    }

    /// All weights zero: plain unregularized training.
    pub fn none() -> Self {
        RegWeights {
            valence: 0.0,
            connectivity: 0.0,
            compatibility: 0.0,
        }
    }

    pub fn any_enabled(&self) -> bool {
        self.valence > 0.0 || self.connectivity > 0.0 || self.compatibility > 0.0
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, w) in [
            ("valence", self.valence),
            ("connectivity", self.connectivity),
            ("compatibility", self.compatibility),
        ] {
            if !w.is_finite() || w < 0.0 {
                return Err(format!("{name} weight {w} must be finite and nonnegative"));
            }
        }
        Ok(())
    }
}

/// Per-node capacity slack `g_i = V(i) - U(i)`, shape `[N]`: the expected
/// capacity consumed by node `i`'s incident edges minus the expected capacity
/// its own label provides. Positive values are violations.
///
/// Diagonal edge fibers are pinned to "nonexistent", whose capacity is zero,
/// so summing loads over all `j` already excludes `j = i`.
pub fn valence_penalty(m: &GraphProbVar, spec: &ConstraintSpec) -> Result<Var, PenaltyError> {
    spec.validate_for(m.schema())?;
    let s = m.schema();
    let n = s.max_nodes;
    let tape = m.f().tape();
    let h = tape.constant(Tensor::new(
        vec![s.edge_channels(), 1],
        spec.edge_capacity.clone(),
    )?);
    let u = tape.constant(Tensor::new(
        vec![s.node_channels(), 1],
        spec.node_capacity.clone(),
    )?);
    let per_pair = m
        .e()
        .reshape(&[n * n, s.edge_channels()])?
        .matmul(&h)?
        .reshape(&[n, n])?;
    let ones = tape.constant(Tensor::ones(&[n, 1]));
    let load = per_pair.matmul(&ones)?;
    let capacity = m.f().matmul(&u)?;
    Ok(load.sub(&capacity)?.reshape(&[n])?)
}

/// Per-pair connectivity slack, shape `[N, N]`, symmetric with zero diagonal.
///
/// Soft reachability is built from the edge-existence matrix
/// `A(i,j) = 1 - E(i,j,0)`: powers `A_0 = I`, `A_1 = A`,
/// `A_{i+1} = sigma(A_i A)` up to `A_{N-1}`, their sum `B`, and
/// `C = sigma(B)`, where `sigma` is the logistic function sharpened by the
/// spec's gain and centered at one half. With node-existence probabilities
/// `q(i) = 1 - F(i,0)`, the pair penalty is
/// `q(i) q(j) (1 - C(i,j)) + (1 - q(i) q(j)) C(i,j)`: pairs of real nodes
/// should be reachable from each other, pairs involving a likely ghost
/// should not.
pub fn connectivity_penalty(m: &GraphProbVar, spec: &ConstraintSpec) -> Result<Var, PenaltyError> {
    spec.validate_for(m.schema())?;
    let s = m.schema();
    let n = s.max_nodes;
    let tape = m.f().tape();
    let gain = spec.sharpness;

    let q = m.f().select_last(0)?.one_minus();
    let adj = m.e().select_last(0)?.one_minus();

    let eye = tape.constant(Tensor::eye(n));
    let mut b = eye.add(&adj)?;
    let mut power = adj.clone();
    for _ in 2..n {
        power = power.matmul(&adj)?.sigmoid_affine(gain, 0.5);
        b = b.add(&power)?;
    }
    let c = b.sigmoid_affine(gain, 0.5);

    let q_col = q.reshape(&[n, 1])?;
    let qq = q_col.matmul(&q_col.transpose()?)?;
    let g = qq.mul(&c.one_minus())?.add(&qq.one_minus().mul(&c)?)?;
    mirror_from_upper(&g, n)
}

/// Per-pair compatibility slack, shape `[N, N]`, symmetric with zero
/// diagonal: `g_ij = [1 - E(i,j,0)] [1 - P(i,j)] - alpha` with
/// `P = F D F^T`, the probability that the two endpoint labels are
/// compatible. An edge is allowed to exist only with probability
/// `alpha / (1 - P)`.
pub fn compatibility_penalty(
    m: &GraphProbVar,
    spec: &ConstraintSpec,
) -> Result<Var, PenaltyError> {
    spec.validate_for(m.schema())?;
    let s = m.schema();
    let n = s.max_nodes;
    let tape = m.f().tape();
    let d_flat: Vec<f64> = spec.compatibility.iter().flatten().copied().collect();
    let d = tape.constant(Tensor::new(
        vec![s.node_channels(), s.node_channels()],
        d_flat,
    )?);
    let p = m.f().matmul(&d)?.matmul(&m.f().transpose()?)?;
    let exists = m.e().select_last(0)?.one_minus();
    let g = exists.mul(&p.one_minus())?.add_scalar(-spec.alpha);
    mirror_from_upper(&g, n)
}

/// Weighted sum of ramped penalties as a scalar tape value: for each enabled
/// family, `weight * sum(max(g, 0))` over its nodes or unordered pairs.
pub fn total_regularizer(
    m: &GraphProbVar,
    spec: &ConstraintSpec,
    weights: &RegWeights,
) -> Result<Var, PenaltyError> {
    weights.validate().map_err(PenaltyError::BadWeights)?;
    if !weights.any_enabled() {
        return Err(PenaltyError::NothingEnabled);
    }
    spec.validate_for(m.schema())?;
    let n = m.schema().max_nodes;
    let tape = m.f().tape().clone();
    let mut total = tape.constant(Tensor::zeros(&[1]));
    if weights.valence > 0.0 {
        let g = valence_penalty(m, spec)?;
        total = total.add(&g.ramp().sum_all().mul_scalar(weights.valence))?;
    }
    if weights.connectivity > 0.0 {
        let g = upper_half(&connectivity_penalty(m, spec)?, n)?;
        total = total.add(&g.ramp().sum_all().mul_scalar(weights.connectivity))?;
    }
    if weights.compatibility > 0.0 {
        let g = upper_half(&compatibility_penalty(m, spec)?, n)?;
        total = total.add(&g.ramp().sum_all().mul_scalar(weights.compatibility))?;
    }
    Ok(total)
}

/// Strict upper-triangle 0/1 mask.
fn upper_mask(n: usize) -> Tensor {
    Tensor::from_fn(&[n, n], |idx| if idx[0] < idx[1] { 1.0 } else { 0.0 })
}

/// Zero out the diagonal and lower triangle.
fn upper_half(g: &Var, n: usize) -> Result<Var, PenaltyError> {
    let mask = g.tape().constant(upper_mask(n));
    Ok(g.mul(&mask)?)
}

/// Keep the upper triangle of `g` and mirror it below the diagonal, leaving
/// the diagonal zero.
fn mirror_from_upper(g: &Var, n: usize) -> Result<Var, PenaltyError> {
    let upper = upper_half(g, n)?;
    Ok(upper.add(&upper.transpose()?)?)
}

/// [`valence_penalty`] evaluated off-tape.
pub fn valence_values(m: &GraphProb, spec: &ConstraintSpec) -> Result<Tensor, PenaltyError> {
    let tape = Tape::new();
    let mv = GraphProbVar::constant(&tape, m);
    Ok(valence_penalty(&mv, spec)?.value())
}

/// [`connectivity_penalty`] evaluated off-tape.
pub fn connectivity_values(m: &GraphProb, spec: &ConstraintSpec) -> Result<Tensor, PenaltyError> {
    let tape = Tape::new();
    let mv = GraphProbVar::constant(&tape, m);
    Ok(connectivity_penalty(&mv, spec)?.value())
}

/// [`compatibility_penalty`] evaluated off-tape.
pub fn compatibility_values(m: &GraphProb, spec: &ConstraintSpec) -> Result<Tensor, PenaltyError> {
    let tape = Tape::new();
    let mv = GraphProbVar::constant(&tape, m);
    Ok(compatibility_penalty(&mv, spec)?.value())
}

/// [`total_regularizer`] evaluated off-tape.
pub fn total_regularizer_value(
    m: &GraphProb,
    spec: &ConstraintSpec,
    weights: &RegWeights,
) -> Result<f64, PenaltyError> {
    let tape = Tape::new();
    let mv = GraphProbVar::constant(&tape, m);
    Ok(total_regularizer(&mv, spec, weights)?.item()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::compare_gradients;
    use crate::graph::GraphOneHot;
    use crate::oracles::{check_connectivity, check_compatibility, check_valence};
    use crate::tape::backward;
    use proptest::prelude::*;

    fn mol_spec() -> ConstraintSpec {
        ConstraintSpec::molecular(&[4.0, 3.0, 2.0, 1.0], 3)
    }

    fn mol_schema(n: usize) -> GraphSchema {
        GraphSchema::new(n, 4, 3).unwrap()
    }

    #[test]
    fn carbon_with_triple_and_double_bond_exceeds_capacity_by_one() {
        // Node 0 is carbon (capacity 4) bonded to two nitrogens by one
        // triple and one double bond: load 5, slack +1.
        let mut g = GraphOneHot::empty(mol_schema(4));
        g.set_node_label(0, 1);
        g.set_node_label(1, 2);
        g.set_node_label(2, 2);
        g.set_edge_label(0, 1, 3);
        g.set_edge_label(0, 2, 2);
        let v = valence_values(&GraphProb::from_graph(&g), &mol_spec()).unwrap();
        assert!((v.data()[0] - 1.0).abs() < 1e-12);
        // The nitrogens have slack 3 - 3 = 0 and 3 - 2 = -1.
        assert!(v.data()[1].abs() < 1e-12);
        assert!((v.data()[2] + 1.0).abs() < 1e-12);
        // The untouched ghost sits exactly at zero.
        assert_eq!(v.data()[3], 0.0);
    }

    #[test]
    fn clique_in_generic_mode_has_zero_slack() {
        // Five real nodes, all pairs connected, each node capacity N-1 = 4.
        let n = 5;
        let schema = GraphSchema::new(n, 5, 1).unwrap();
        let spec = ConstraintSpec::node_compatible(n, vec![vec![0.0; 6]; 6]);
        let mut g = GraphOneHot::empty(schema);
        for i in 0..n {
            g.set_node_label(i, 1);
        }
        for (i, j) in schema.pairs() {
            g.set_edge_label(i, j, 1);
        }
        let v = valence_values(&GraphProb::from_graph(&g), &spec).unwrap();
        for i in 0..n {
            assert!(v.data()[i].abs() < 1e-12, "node {i}: {}", v.data()[i]);
        }
    }

    #[test]
    fn connected_pair_has_negligible_penalty() {
        let schema = GraphSchema::new(2, 1, 1).unwrap();
        let spec = ConstraintSpec::node_compatible(2, vec![vec![0.0; 2]; 2]);
        let mut g = GraphOneHot::empty(schema);
        g.set_node_label(0, 1);
        g.set_node_label(1, 1);
        g.set_edge_label(0, 1, 1);
        let c = connectivity_values(&GraphProb::from_graph(&g), &spec).unwrap();
        assert!(c.get2(0, 1).abs() < 1e-10, "penalty {}", c.get2(0, 1));
        assert_eq!(c.get2(0, 1), c.get2(1, 0));
        assert_eq!(c.get2(0, 0), 0.0);
    }

    #[test]
    fn isolated_ghost_has_negligible_penalty() {
        let schema = GraphSchema::new(2, 1, 1).unwrap();
        let spec = ConstraintSpec::node_compatible(2, vec![vec![0.0; 2]; 2]);
        let mut g = GraphOneHot::empty(schema);
        g.set_node_label(0, 1);
        let c = connectivity_values(&GraphProb::from_graph(&g), &spec).unwrap();
        assert!(c.get2(0, 1).abs() < 1e-10, "penalty {}", c.get2(0, 1));
    }

    #[test]
    fn isolated_real_node_is_penalized() {
        // Nodes 0-1 joined by an edge, node 2 real but isolated.
        let schema = GraphSchema::new(3, 1, 1).unwrap();
        let spec = ConstraintSpec::node_compatible(3, vec![vec![0.0; 2]; 2]);
        let mut g = GraphOneHot::empty(schema);
        for i in 0..3 {
            g.set_node_label(i, 1);
        }
        g.set_edge_label(0, 1, 1);
        let c = connectivity_values(&GraphProb::from_graph(&g), &spec).unwrap();
        assert!(c.get2(0, 1) < 1e-10);
        assert!(c.get2(0, 2) > 0.9, "penalty {}", c.get2(0, 2));
        assert!(c.get2(1, 2) > 0.9, "penalty {}", c.get2(1, 2));
    }

    fn compat_schema(n: usize) -> GraphSchema {
        GraphSchema::new(n, 5, 1).unwrap()
    }

    fn compat_spec(n: usize) -> ConstraintSpec {
        ConstraintSpec::node_compatible_default(n)
    }

    #[test]
    fn compatible_pair_is_never_penalized() {
        // Labels 1 and 2 are compatible, so 1 - P = 0 and the slack is
        // -alpha no matter the edge probability.
        let mut g = GraphOneHot::empty(compat_schema(2));
        g.set_node_label(0, 1);
        g.set_node_label(1, 2);
        g.set_edge_label(0, 1, 1);
        let spec = compat_spec(2);
        let c = compatibility_values(&GraphProb::from_graph(&g), &spec).unwrap();
        assert!((c.get2(0, 1) + spec.alpha).abs() < 1e-12);
    }

    #[test]
    fn certain_incompatible_edge_scores_one_minus_alpha() {
        // Labels 1 and 5 are incompatible; with the edge certain the slack
        // is 1 - alpha = 0.75 at the default alpha.
        let mut g = GraphOneHot::empty(compat_schema(2));
        g.set_node_label(0, 1);
        g.set_node_label(1, 5);
        g.set_edge_label(0, 1, 1);
        let c = compatibility_values(&GraphProb::from_graph(&g), &compat_spec(2)).unwrap();
        assert!((c.get2(0, 1) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn absent_edge_scores_minus_alpha() {
        let mut g = GraphOneHot::empty(compat_schema(2));
        g.set_node_label(0, 1);
        g.set_node_label(1, 5);
        let spec = compat_spec(2);
        let c = compatibility_values(&GraphProb::from_graph(&g), &spec).unwrap();
        assert!((c.get2(0, 1) + spec.alpha).abs() < 1e-12);
    }

    #[test]
    fn regularizer_examples() {
        // All slacks nonpositive: zero total.
        let mut methane = GraphOneHot::empty(mol_schema(5));
        methane.set_node_label(0, 1);
        for h in 1..=4 {
            methane.set_node_label(h, 4);
            methane.set_edge_label(0, h, 1);
        }
        let m = GraphProb::from_graph(&methane);
        let weights = RegWeights::molecular();
        let total = total_regularizer_value(&m, &mol_spec(), &weights).unwrap();
        assert!(total < 1e-9, "total {total}");

        // One node over capacity by exactly one, valence weight 5.
        let mut g = GraphOneHot::empty(mol_schema(4));
        g.set_node_label(0, 1);
        g.set_node_label(1, 2);
        g.set_node_label(2, 2);
        g.set_edge_label(0, 1, 3);
        g.set_edge_label(0, 2, 2);
        let m = GraphProb::from_graph(&g);
        let only_valence = RegWeights {
            valence: 5.0,
            connectivity: 0.0,
            compatibility: 0.0,
        };
        let total = total_regularizer_value(&m, &mol_spec(), &only_valence).unwrap();
        assert!((total - 5.0).abs() < 1e-9, "total {total}");

        // Doubling the weights doubles the total.
        let weights = RegWeights::molecular();
        let doubled = RegWeights {
            valence: 2.0,
            connectivity: 2.0,
            compatibility: 0.0,
        };
        let t1 = total_regularizer_value(&m, &mol_spec(), &weights).unwrap();
        let t2 = total_regularizer_value(&m, &mol_spec(), &doubled).unwrap();
        assert!((t2 - 2.0 * t1).abs() < 1e-9);
    }

    #[test]
    fn all_weights_zero_is_a_configuration_error() {
        let g = GraphOneHot::empty(mol_schema(3));
        let m = GraphProb::from_graph(&g);
        let err = total_regularizer_value(&m, &mol_spec(), &RegWeights::none());
        assert!(matches!(err, Err(PenaltyError::NothingEnabled)));
    }

    /// Soft relaxation used by the gradient checks: every row/fiber mixes the
    /// one-hot target with a uniform distribution so no probability is
    /// exactly zero or one.
    fn soften(g: &GraphOneHot, mix: f64) -> GraphProb {
        let s = g.schema();
        let exact = GraphProb::from_graph(g);
        let nc = s.node_channels();
        let ec = s.edge_channels();
        let f = Tensor::from_fn(&[s.max_nodes, nc], |idx| {
            (1.0 - mix) * exact.node_prob(idx[0], idx[1]) + mix / nc as f64
        });
        let e = Tensor::from_fn(&[s.max_nodes, s.max_nodes, ec], |idx| {
            if idx[0] == idx[1] {
                if idx[2] == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                (1.0 - mix) * exact.edge_prob(idx[0], idx[1], idx[2]) + mix / ec as f64
            }
        });
        GraphProb::new(s, f, e).unwrap()
    }

    fn example_molecule() -> GraphOneHot {
        let mut g = GraphOneHot::empty(mol_schema(5));
        g.set_node_label(0, 1);
        g.set_node_label(1, 3);
        g.set_node_label(2, 4);
        g.set_node_label(3, 4);
        g.set_edge_label(0, 1, 2);
        g.set_edge_label(0, 2, 1);
        g.set_edge_label(0, 3, 1);
        g
    }

    /// Check the analytic gradient of a scalarized penalty against central
    /// finite differences on every coordinate of F and E.
    fn check_penalty_gradient(
        m: &GraphProb,
        spec: &ConstraintSpec,
        build: impl Fn(&GraphProbVar, &ConstraintSpec) -> Result<Var, PenaltyError>,
    ) {
        let tape = Tape::new();
        let mv = GraphProbVar::leaf(&tape, m);
        let scalar = build(&mv, spec).unwrap().ramp().sum_all();
        let grads = backward(&scalar).unwrap();
        let analytic = [grads.wrt_or_zeros(mv.f()), grads.wrt_or_zeros(mv.e())];
        let inputs = [m.node_probs().clone(), m.edge_probs().clone()];
        let schema = m.schema();
        let mismatches = compare_gradients(
            &inputs,
            &analytic,
            1e-6,
            1e-3,
            1e-4,
            None,
            |t| {
                let tape = Tape::new();
                let mv = GraphProbVar::from_parts(
                    schema,
                    tape.constant(t[0].clone()),
                    tape.constant(t[1].clone()),
                )
                .unwrap();
                build(&mv, spec).unwrap().ramp().sum_all().item().unwrap()
            },
        );
        assert!(
            mismatches.is_empty(),
            "gradient mismatches: {:?}",
            &mismatches[..mismatches.len().min(5)]
        );
    }

    #[test]
    fn valence_gradient_matches_finite_differences() {
        let m = soften(&example_molecule(), 0.3);
        check_penalty_gradient(&m, &mol_spec(), valence_penalty);
    }

    #[test]
    fn connectivity_gradient_matches_finite_differences() {
        let mut g = GraphOneHot::empty(GraphSchema::new(4, 1, 1).unwrap());
        for i in 0..3 {
            g.set_node_label(i, 1);
        }
        g.set_edge_label(0, 1, 1);
        let m = soften(&g, 0.4);
        let spec = ConstraintSpec::node_compatible(4, vec![vec![0.0; 2]; 2]);
        check_penalty_gradient(&m, &spec, connectivity_penalty);
    }

    #[test]
    fn compatibility_gradient_matches_finite_differences() {
        let mut g = GraphOneHot::empty(compat_schema(3));
        g.set_node_label(0, 1);
        g.set_node_label(1, 5);
        g.set_node_label(2, 2);
        g.set_edge_label(0, 1, 1);
        g.set_edge_label(1, 2, 1);
        let m = soften(&g, 0.35);
        check_penalty_gradient(&m, &compat_spec(3), compatibility_penalty);
    }

    fn arb_graph(n: usize, d: usize, t: usize) -> impl Strategy<Value = GraphOneHot> {
        let schema = GraphSchema::new(n, d, t).unwrap();
        (
            proptest::collection::vec(0..=d, n),
            proptest::collection::vec(0..=t, n * (n - 1) / 2),
        )
            .prop_map(move |(labels, edges)| {
                GraphOneHot::from_parts(schema, labels, edges).unwrap()
            })
    }

    proptest! {
        #[test]
        fn ramped_valence_matches_exact_violation(g in arb_graph(6, 4, 3)) {
            let spec = mol_spec();
            let report = check_valence(&g, &spec).unwrap();
            let v = valence_values(&GraphProb::from_graph(&g), &spec).unwrap();
            let ramped: f64 = v.data().iter().map(|x| x.max(0.0)).sum();
            prop_assert!((ramped - report.total_violation()).abs() < 1e-9);
            for (i, node) in report.nodes.iter().enumerate() {
                prop_assert!((v.data()[i].max(0.0) - node.violation()).abs() < 1e-9);
            }
        }

        #[test]
        fn ramped_connectivity_matches_search_verdict(g in arb_graph(6, 2, 1)) {
            let spec = ConstraintSpec::node_compatible(6, vec![vec![0.0; 3]; 3]);
            let c = connectivity_values(&GraphProb::from_graph(&g), &spec).unwrap();
            let worst = c.data().iter().fold(0.0_f64, |m, &x| m.max(x.max(0.0)));
            if check_connectivity(&g) {
                prop_assert!(worst < 1e-6, "connected graph scored {worst}");
            } else {
                prop_assert!(worst > 0.9, "disconnected graph scored {worst}");
            }
        }

        #[test]
        fn ramped_compatibility_matches_edge_scan(g in arb_graph(6, 5, 1)) {
            let spec = compat_spec(6);
            let c = compatibility_values(&GraphProb::from_graph(&g), &spec).unwrap();
            let worst = c.data().iter().fold(0.0_f64, |m, &x| m.max(x.max(0.0)));
            if check_compatibility(&g, &spec).unwrap() {
                prop_assert!(worst == 0.0, "compatible graph scored {worst}");
            } else {
                prop_assert!(worst > 0.0, "incompatible graph scored {worst}");
            }
        }

        #[test]
        fn penalties_are_permutation_equivariant(
            g in arb_graph(5, 4, 3),
            seed in 0u64..1000,
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut perm: Vec<usize> = (0..5).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let spec = mol_spec();
            let m = GraphProb::from_graph(&g);
            let mp = m.permute(&perm);

            let v = valence_values(&m, &spec).unwrap();
            let vp = valence_values(&mp, &spec).unwrap();
            for i in 0..5 {
                prop_assert!((vp.data()[i] - v.data()[perm[i]]).abs() < 1e-9);
            }

            let c = connectivity_values(&m, &spec).unwrap();
            let cp = connectivity_values(&mp, &spec).unwrap();
            for i in 0..5 {
                for j in 0..5 {
                    prop_assert!((cp.get2(i, j) - c.get2(perm[i], perm[j])).abs() < 1e-9);
                }
            }
        }
    }
}
