//! Discrete and probabilistic labeled graphs.
//!
//! A graph over a [`GraphSchema`] has at most `N` nodes, `d` node types and
//! `t` edge types. Type index 0 always means "nonexistent": a node with label
//! 0 is a ghost node and an edge with label 0 is absent. [`GraphOneHot`]
//! stores the discrete labels directly (the one-hot node matrix and edge
//! tensor are materialized on demand), which makes the one-hot/symmetry/
//! diagonal invariants hold by construction. [`GraphProb`] is the relaxation
//! where each node row and edge fiber is a probability vector; it is what the
//! decoder emits and what graphs are sampled from.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Tensor, LOG_CLAMP};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("schema mismatch: {context} (expected {expected:?}, got {got:?})")]
    SchemaMismatch {
        context: &'static str,
        expected: GraphSchema,
        got: GraphSchema,
    },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("node {node}: label {label} exceeds node-type count {max}")]
    InvalidNodeLabel { node: usize, label: usize, max: usize },
    #[error("edge ({i},{j}): label {label} exceeds edge-type count {max}")]
    InvalidEdgeLabel {
        i: usize,
        j: usize,
        label: usize,
        max: usize,
    },
    #[error("edge ({i},{j}): invalid endpoint pair for {n} nodes")]
    InvalidEdgeIndex { i: usize, j: usize, n: usize },
    #[error("{what} {index} is not a probability vector (sum {sum})")]
    NotSimplex {
        what: &'static str,
        index: usize,
        sum: f64,
    },
    #[error("edge tensor not symmetric at ({i},{j},{k})")]
    Asymmetric { i: usize, j: usize, k: usize },
    #[error("diagonal fiber {i} is not the nonexistent one-hot")]
    BadDiagonal { i: usize },
    #[error("tensor shape {got:?} does not match schema (expected {expected:?})")]
    BadShape { expected: Vec<usize>, got: Vec<usize> },
    #[error("wrong number of {what}: expected {expected}, got {got}")]
    WrongCount {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Maximum node count, node-type count, edge-type count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSchema {
    pub max_nodes: usize,
    pub node_types: usize,
    pub edge_types: usize,
}

impl GraphSchema {
    pub fn new(max_nodes: usize, node_types: usize, edge_types: usize) -> Result<Self, GraphError> {
        if max_nodes == 0 || node_types == 0 || edge_types == 0 {
            return Err(GraphError::InvalidSchema(format!(
                "max_nodes={max_nodes}, node_types={node_types}, edge_types={edge_types} (all must be >= 1)"
            )));
        }
        Ok(GraphSchema {
            max_nodes,
            node_types,
            edge_types,
        })
    }

    /// Width of a node row: `1 + d`.
    pub fn node_channels(&self) -> usize {
        1 + self.node_types
    }

    /// Width of an edge fiber: `1 + t`.
    pub fn edge_channels(&self) -> usize {
        1 + self.edge_types
    }

    /// Number of unordered node pairs `i < j`.
    pub fn pair_count(&self) -> usize {
        self.max_nodes * (self.max_nodes - 1) / 2
    }

    /// Flat index of the pair `(i, j)` with `i < j` in row-major upper
    /// triangle order.
    pub fn pair_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.max_nodes);
        let n = self.max_nodes;
        i * n - i * (i + 1) / 2 + (j - i - 1)
    }

    /// All pairs `(i, j)` with `i < j` in flat-index order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.max_nodes;
        (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j)))
    }
}

/// A discrete labeled graph: node labels in `0..=d`, upper-triangle edge
/// labels in `0..=t`, label 0 meaning nonexistent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphOneHot {
    schema: GraphSchema,
    labels: Vec<usize>,
    edges: Vec<usize>,
}

impl GraphOneHot {
    /// Graph with all nodes ghost and no edges.
    pub fn empty(schema: GraphSchema) -> Self {
        GraphOneHot {
            labels: vec![0; schema.max_nodes],
            edges: vec![0; schema.pair_count()],
            schema,
        }
    }

    pub fn from_parts(
        schema: GraphSchema,
        labels: Vec<usize>,
        edges: Vec<usize>,
    ) -> Result<Self, GraphError> {
        if labels.len() != schema.max_nodes {
            return Err(GraphError::WrongCount {
                what: "node labels",
                expected: schema.max_nodes,
                got: labels.len(),
            });
        }
        if edges.len() != schema.pair_count() {
            return Err(GraphError::WrongCount {
                what: "edge labels",
                expected: schema.pair_count(),
                got: edges.len(),
            });
        }
        for (node, &label) in labels.iter().enumerate() {
            if label > schema.node_types {
                return Err(GraphError::InvalidNodeLabel {
                    node,
                    label,
                    max: schema.node_types,
                });
            }
        }
        for (i, j) in schema.pairs() {
            let label = edges[schema.pair_index(i, j)];
            if label > schema.edge_types {
                return Err(GraphError::InvalidEdgeLabel {
                    i,
                    j,
                    label,
                    max: schema.edge_types,
                });
            }
        }
        Ok(GraphOneHot {
            schema,
            labels,
            edges,
        })
    }

    pub fn schema(&self) -> GraphSchema {
        self.schema
    }

    /// Node label, 0 for ghosts.
    pub fn node_label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn node_labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn is_ghost(&self, i: usize) -> bool {
        self.labels[i] == 0
    }

    /// Edge label between distinct nodes, 0 when absent. Symmetric.
    pub fn edge_label(&self, i: usize, j: usize) -> usize {
        debug_assert_ne!(i, j);
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.edges[self.schema.pair_index(a, b)]
    }

    pub fn set_node_label(&mut self, i: usize, label: usize) {
        debug_assert!(label <= self.schema.node_types);
        self.labels[i] = label;
    }

    pub fn set_edge_label(&mut self, i: usize, j: usize, label: usize) {
        debug_assert_ne!(i, j);
        debug_assert!(label <= self.schema.edge_types);
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let idx = self.schema.pair_index(a, b);
        self.edges[idx] = label;
    }

    /// Number of incident edges (any nonzero label).
    pub fn degree(&self, i: usize) -> usize {
        (0..self.schema.max_nodes)
            .filter(|&j| j != i && self.edge_label(i, j) != 0)
            .count()
    }

    /// Number of non-ghost nodes.
    pub fn active_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    /// Edges as `(i, j, label)` triples with `i < j`, in flat order.
    pub fn edge_triples(&self) -> Vec<(usize, usize, usize)> {
        self.schema
            .pairs()
            .filter_map(|(i, j)| {
                let label = self.edges[self.schema.pair_index(i, j)];
                (label != 0).then_some((i, j, label))
            })
            .collect()
    }

    /// One-hot node-label matrix of shape `[N, 1 + d]`.
    pub fn node_matrix(&self) -> Tensor {
        let schema = self.schema;
        let mut f = Tensor::zeros(&[schema.max_nodes, schema.node_channels()]);
        for (i, &label) in self.labels.iter().enumerate() {
            f.set2(i, label, 1.0);
        }
        f
    }

    /// One-hot edge-label tensor of shape `[N, N, 1 + t]`, symmetric, with
    /// diagonal fibers one-hot at channel 0.
    pub fn edge_tensor(&self) -> Tensor {
        let schema = self.schema;
        let n = schema.max_nodes;
        let mut e = Tensor::zeros(&[n, n, schema.edge_channels()]);
        for i in 0..n {
            e.set3(i, i, 0, 1.0);
        }
        for (i, j) in schema.pairs() {
            let label = self.edges[schema.pair_index(i, j)];
            e.set3(i, j, label, 1.0);
            e.set3(j, i, label, 1.0);
        }
        e
    }

    /// Relabel nodes so that new node `i` is old node `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> GraphOneHot {
        let n = self.schema.max_nodes;
        debug_assert_eq!(perm.len(), n);
        let mut out = GraphOneHot::empty(self.schema);
        for i in 0..n {
            out.labels[i] = self.labels[perm[i]];
        }
        for (i, j) in self.schema.pairs() {
            let label = self.edge_label(perm[i], perm[j]);
            out.edges[self.schema.pair_index(i, j)] = label;
        }
        out
    }

    /// Byte key for tensor-exact equality (padding included).
    pub fn exact_key(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.labels.len() + self.edges.len());
        out.extend(self.labels.iter().map(|&l| l as u8));
        out.extend(self.edges.iter().map(|&l| l as u8));
        out
    }
}

const SIMPLEX_TOL: f64 = 1e-9;

/// A probabilistic graph model: node rows and edge fibers are probability
/// vectors over types, edge fibers symmetric in `(i, j)` with diagonal fibers
/// pinned to "nonexistent".
#[derive(Debug, Clone, PartialEq)]
pub struct GraphProb {
    schema: GraphSchema,
    /// `[N, 1 + d]`
    f: Tensor,
    /// `[N, N, 1 + t]`
    e: Tensor,
}

impl GraphProb {
    pub fn new(schema: GraphSchema, f: Tensor, e: Tensor) -> Result<Self, GraphError> {
        let n = schema.max_nodes;
        let f_shape = [n, schema.node_channels()];
        if f.shape() != f_shape {
            return Err(GraphError::BadShape {
                expected: f_shape.to_vec(),
                got: f.shape().to_vec(),
            });
        }
        let e_shape = [n, n, schema.edge_channels()];
        if e.shape() != e_shape {
            return Err(GraphError::BadShape {
                expected: e_shape.to_vec(),
                got: e.shape().to_vec(),
            });
        }
        for i in 0..n {
            let sum: f64 = (0..schema.node_channels()).map(|r| f.get2(i, r)).sum();
            let nonneg = (0..schema.node_channels()).all(|r| f.get2(i, r) >= -SIMPLEX_TOL);
            if (sum - 1.0).abs() > SIMPLEX_TOL || !nonneg {
                return Err(GraphError::NotSimplex {
                    what: "node row",
                    index: i,
                    sum,
                });
            }
        }
        for i in 0..n {
            for j in 0..n {
                let sum: f64 = (0..schema.edge_channels()).map(|k| e.get3(i, j, k)).sum();
                let nonneg = (0..schema.edge_channels()).all(|k| e.get3(i, j, k) >= -SIMPLEX_TOL);
                if (sum - 1.0).abs() > SIMPLEX_TOL || !nonneg {
                    return Err(GraphError::NotSimplex {
                        what: "edge fiber",
                        index: i * n + j,
                        sum,
                    });
                }
                for k in 0..schema.edge_channels() {
                    if (e.get3(i, j, k) - e.get3(j, i, k)).abs() > SIMPLEX_TOL {
                        return Err(GraphError::Asymmetric { i, j, k });
                    }
                }
            }
            if (e.get3(i, i, 0) - 1.0).abs() > SIMPLEX_TOL {
                return Err(GraphError::BadDiagonal { i });
            }
        }
        Ok(GraphProb { schema, f, e })
    }

    /// Exact relaxation of a discrete graph (probabilities 0 and 1).
    pub fn from_graph(g: &GraphOneHot) -> Self {
        GraphProb {
            schema: g.schema(),
            f: g.node_matrix(),
            e: g.edge_tensor(),
        }
    }

    pub fn schema(&self) -> GraphSchema {
        self.schema
    }

    pub fn node_probs(&self) -> &Tensor {
        &self.f
    }

    pub fn edge_probs(&self) -> &Tensor {
        &self.e
    }

    /// Probability that node `i` has type `r`.
    pub fn node_prob(&self, i: usize, r: usize) -> f64 {
        self.f.get2(i, r)
    }

    /// Probability that edge `(i, j)` has type `k`.
    pub fn edge_prob(&self, i: usize, j: usize, k: usize) -> f64 {
        self.e.get3(i, j, k)
    }

    /// Relabel nodes so that new node `i` is old node `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> GraphProb {
        let n = self.schema.max_nodes;
        let nc = self.schema.node_channels();
        let ec = self.schema.edge_channels();
        let mut f = Tensor::zeros(&[n, nc]);
        let mut e = Tensor::zeros(&[n, n, ec]);
        for i in 0..n {
            for r in 0..nc {
                f.set2(i, r, self.f.get2(perm[i], r));
            }
            for j in 0..n {
                for k in 0..ec {
                    e.set3(i, j, k, self.e.get3(perm[i], perm[j], k));
                }
            }
        }
        GraphProb {
            schema: self.schema,
            f,
            e,
        }
    }
}

/// Log-probability of sampling `g` from the model `m`: node terms over every
/// node plus edge terms over unordered pairs `i < j`, with probabilities
/// clamped at `LOG_CLAMP` before the log.
pub fn log_likelihood(g: &GraphOneHot, m: &GraphProb) -> Result<f64, GraphError> {
    if g.schema() != m.schema() {
        return Err(GraphError::SchemaMismatch {
            context: "log_likelihood",
            expected: m.schema(),
            got: g.schema(),
        });
    }
    let schema = g.schema();
    let mut total = 0.0;
    for i in 0..schema.max_nodes {
        total += m.node_prob(i, g.node_label(i)).max(LOG_CLAMP).ln();
    }
    for (i, j) in schema.pairs() {
        total += m.edge_prob(i, j, g.edge_label(i, j)).max(LOG_CLAMP).ln();
    }
    Ok(total)
}

fn categorical(probs: impl Iterator<Item = f64>, u: f64) -> usize {
    let mut cum = 0.0;
    let mut last = 0;
    for (k, p) in probs.enumerate() {
        cum += p.max(0.0);
        last = k;
        if u < cum {
            return k;
        }
    }
    last
}

/// Draw a discrete graph: each node row and each upper-triangle edge fiber is
/// an independent categorical draw; the lower triangle mirrors the upper.
pub fn sample(m: &GraphProb, rng: &mut impl Rng) -> GraphOneHot {
    let schema = m.schema();
    let mut g = GraphOneHot::empty(schema);
    for i in 0..schema.max_nodes {
        let u: f64 = rng.random();
        let label = categorical((0..schema.node_channels()).map(|r| m.node_prob(i, r)), u);
        g.set_node_label(i, label);
    }
    for (i, j) in schema.pairs() {
        let u: f64 = rng.random();
        let label = categorical((0..schema.edge_channels()).map(|k| m.edge_prob(i, j, k)), u);
        g.set_edge_label(i, j, label);
    }
    g
}

/// Most likely graph under the independence factorization: per-row and
/// per-fiber argmax, ties broken toward the lowest index (which prefers
/// "nonexistent" on exact ties).
pub fn argmax_decode(m: &GraphProb) -> GraphOneHot {
    let schema = m.schema();
    let mut g = GraphOneHot::empty(schema);
    for i in 0..schema.max_nodes {
        let mut best = 0;
        for r in 1..schema.node_channels() {
            if m.node_prob(i, r) > m.node_prob(i, best) {
                best = r;
            }
        }
        g.set_node_label(i, best);
    }
    for (i, j) in schema.pairs() {
        let mut best = 0;
        for k in 1..schema.edge_channels() {
            if m.edge_prob(i, j, k) > m.edge_prob(i, j, best) {
                best = k;
            }
        }
        g.set_edge_label(i, j, best);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn schema(n: usize, d: usize, t: usize) -> GraphSchema {
        GraphSchema::new(n, d, t).unwrap()
    }

    #[test]
    fn one_hot_relaxation_has_zero_log_likelihood() {
        let s = schema(4, 3, 2);
        let mut g = GraphOneHot::empty(s);
        g.set_node_label(0, 1);
        g.set_node_label(1, 3);
        g.set_edge_label(0, 1, 2);
        let m = GraphProb::from_graph(&g);
        assert_eq!(log_likelihood(&g, &m).unwrap(), 0.0);
    }

    #[test]
    fn half_probability_edge() {
        // Two nodes, one possible edge with a 50/50 fiber.
        let s = schema(2, 1, 1);
        let mut g = GraphOneHot::empty(s);
        g.set_node_label(0, 1);
        g.set_node_label(1, 1);
        g.set_edge_label(0, 1, 1);
        let f = g.node_matrix();
        let mut e = g.edge_tensor();
        e.set3(0, 1, 0, 0.5);
        e.set3(0, 1, 1, 0.5);
        e.set3(1, 0, 0, 0.5);
        e.set3(1, 0, 1, 0.5);
        let m = GraphProb::new(s, f, e).unwrap();
        let ll = log_likelihood(&g, &m).unwrap();
        assert!((ll - 0.5_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn uniform_model_log_likelihood() {
        // N=2, d=1, t=1: two node rows at 1/2 each and one fiber at 1/2.
        let s = schema(2, 1, 1);
        let f = Tensor::full(&[2, 2], 0.5);
        let mut e = Tensor::zeros(&[2, 2, 2]);
        for i in 0..2 {
            e.set3(i, i, 0, 1.0);
        }
        e.set3(0, 1, 0, 0.5);
        e.set3(0, 1, 1, 0.5);
        e.set3(1, 0, 0, 0.5);
        e.set3(1, 0, 1, 0.5);
        let m = GraphProb::new(s, f, e).unwrap();
        let g = GraphOneHot::empty(s);
        let ll = log_likelihood(&g, &m).unwrap();
        assert!((ll - (-3.0 * 2.0_f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_entries_hit_the_log_clamp() {
        // Score a labeled, edged graph against the empty graph's exact
        // relaxation: both node labels and the edge label have probability
        // zero and each contributes ln(clamp) instead of negative infinity;
        // the ghost node and the two absent edges are certain.
        let s = schema(3, 2, 1);
        let mut g = GraphOneHot::empty(s);
        g.set_node_label(0, 1);
        g.set_node_label(1, 2);
        g.set_edge_label(0, 1, 1);
        let empty = GraphProb::from_graph(&GraphOneHot::empty(s));
        let ll = log_likelihood(&g, &empty).unwrap();
        assert!((ll - 3.0 * LOG_CLAMP.ln()).abs() < 1e-9);
    }

    #[test]
    fn log_likelihood_never_positive() {
        let s = schema(3, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let m = random_prob(s, &mut rng);
            let g = sample(&m, &mut rng);
            assert!(log_likelihood(&g, &m).unwrap() <= 0.0);
        }
    }

    #[test]
    fn schema_mismatch_rejected() {
        let g = GraphOneHot::empty(schema(2, 1, 1));
        let m = GraphProb::from_graph(&GraphOneHot::empty(schema(3, 1, 1)));
        assert!(matches!(
            log_likelihood(&g, &m),
            Err(GraphError::SchemaMismatch { .. })
        ));
    }

    fn random_prob(s: GraphSchema, rng: &mut ChaCha8Rng) -> GraphProb {
        let n = s.max_nodes;
        let mut f = Tensor::zeros(&[n, s.node_channels()]);
        for i in 0..n {
            let mut row: Vec<f64> = (0..s.node_channels()).map(|_| rng.random::<f64>()).collect();
            let sum: f64 = row.iter().sum();
            for v in &mut row {
                *v /= sum;
            }
            for (r, v) in row.iter().enumerate() {
                f.set2(i, r, *v);
            }
        }
        let mut e = Tensor::zeros(&[n, n, s.edge_channels()]);
        for i in 0..n {
            e.set3(i, i, 0, 1.0);
        }
        for (i, j) in s.pairs() {
            let mut fiber: Vec<f64> = (0..s.edge_channels()).map(|_| rng.random::<f64>()).collect();
            let sum: f64 = fiber.iter().sum();
            for v in &mut fiber {
                *v /= sum;
            }
            for (k, v) in fiber.iter().enumerate() {
                e.set3(i, j, k, *v);
                e.set3(j, i, k, *v);
            }
        }
        GraphProb::new(s, f, e).unwrap()
    }

    #[test]
    fn sample_of_degenerate_model_is_exact() {
        let s = schema(3, 2, 2);
        let mut g = GraphOneHot::empty(s);
        g.set_node_label(0, 2);
        g.set_node_label(1, 1);
        g.set_edge_label(0, 1, 1);
        let m = GraphProb::from_graph(&g);
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            assert_eq!(sample(&m, &mut rng), g);
        }
    }

    #[test]
    fn sample_edge_frequency_matches_fiber() {
        let s = schema(2, 1, 1);
        let f = Tensor::from_fn(&[2, 2], |idx| if idx[1] == 1 { 1.0 } else { 0.0 });
        let mut e = Tensor::zeros(&[2, 2, 2]);
        for i in 0..2 {
            e.set3(i, i, 0, 1.0);
        }
        for (a, b) in [(0, 1), (1, 0)] {
            e.set3(a, b, 0, 0.5);
            e.set3(a, b, 1, 0.5);
        }
        let m = GraphProb::new(s, f, e).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = 10_000;
        let with_edge = (0..draws)
            .filter(|_| sample(&m, &mut rng).edge_label(0, 1) == 1)
            .count();
        let freq = with_edge as f64 / draws as f64;
        assert!((freq - 0.5).abs() < 0.02, "edge frequency {freq}");
    }

    #[test]
    fn argmax_decode_examples() {
        let s = schema(2, 1, 2);
        let f = Tensor::from_fn(&[2, 2], |idx| if idx[1] == 1 { 1.0 } else { 0.0 });
        let mut e = Tensor::zeros(&[2, 2, 3]);
        for i in 0..2 {
            e.set3(i, i, 0, 1.0);
        }
        // fiber [0.2, 0.5, 0.3] -> type 1
        for (a, b) in [(0, 1), (1, 0)] {
            e.set3(a, b, 0, 0.2);
            e.set3(a, b, 1, 0.5);
            e.set3(a, b, 2, 0.3);
        }
        let m = GraphProb::new(s, f.clone(), e).unwrap();
        assert_eq!(argmax_decode(&m).edge_label(0, 1), 1);

        // Uniform fiber -> tie broken toward "nonexistent".
        let mut e2 = Tensor::zeros(&[2, 2, 3]);
        for i in 0..2 {
            e2.set3(i, i, 0, 1.0);
        }
        for (a, b) in [(0, 1), (1, 0)] {
            for k in 0..3 {
                e2.set3(a, b, k, 1.0 / 3.0);
            }
        }
        let m2 = GraphProb::new(s, f, e2).unwrap();
        assert_eq!(argmax_decode(&m2).edge_label(0, 1), 0);
    }

    #[test]
    fn argmax_of_one_hot_recovers_graph() {
        let s = schema(4, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = random_prob(s, &mut rng);
            let g = sample(&m, &mut rng);
            let exact = GraphProb::from_graph(&g);
            assert_eq!(argmax_decode(&exact), g);
            assert_eq!(log_likelihood(&argmax_decode(&exact), &exact).unwrap(), 0.0);
        }
    }

    #[test]
    fn permute_round_trip() {
        let s = schema(4, 2, 2);
        let mut g = GraphOneHot::empty(s);
        g.set_node_label(0, 1);
        g.set_node_label(2, 2);
        g.set_edge_label(0, 2, 1);
        let perm = [2, 0, 3, 1];
        let p = g.permute(&perm);
        assert_eq!(p.node_label(0), 2);
        assert_eq!(p.node_label(1), 1);
        assert_eq!(p.edge_label(0, 1), 1);
        // Inverse permutation restores the original.
        let mut inv = [0usize; 4];
        for (i, &v) in perm.iter().enumerate() {
            inv[v] = i;
        }
        assert_eq!(p.permute(&inv), g);
    }

    #[test]
    fn prob_validation_catches_bad_rows() {
        let s = schema(2, 1, 1);
        let f = Tensor::full(&[2, 2], 0.6);
        let e = GraphOneHot::empty(s).edge_tensor();
        assert!(matches!(
            GraphProb::new(s, f, e),
            Err(GraphError::NotSimplex { what: "node row", .. })
        ));
    }
}
