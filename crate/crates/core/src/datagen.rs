//! Synthetic dataset generators.
//!
//! Two recipes cover the two constraint tasks at desk scale: random
//! compatibility-respecting graphs (node count uniform over a range, labels
//! uniform, each compatible pair wired independently) and toy molecules
//! grown sequentially under a valence table so that every output is
//! connected and valence-satisfying. A third operation corrupts graphs by
//! inserting edges between incompatible node pairs, producing inputs for
//! denoising experiments.
//!
//! Each graph is generated from its own stream derived from the dataset
//! seed and the graph's index, so graph `i` is reproducible independently
//! of how many neighbors were generated.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::COMPATIBILITY_5;
use crate::graph::{GraphOneHot, GraphSchema};
use crate::rng::derive_rng;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator parameters: {0}")]
    Config(String),
    #[error("valence table {0:?} admits no growth (every entry below 1)")]
    UnattainableValence(Vec<f64>),
}

/// Check a 0/1 compatibility matrix with a ghost border, sized for `d`
/// labels.
fn check_compatibility_matrix(compat: &[Vec<f64>], node_types: usize) -> Result<(), GenError> {
    let want = node_types + 1;
    if compat.len() != want || compat.iter().any(|r| r.len() != want) {
        return Err(GenError::Config(format!(
            "compatibility matrix must be {want}x{want} (ghost row plus one per label)"
        )));
    }
    for (a, row) in compat.iter().enumerate() {
        for (b, &v) in row.iter().enumerate() {
            if v != 0.0 && v != 1.0 {
                return Err(GenError::Config(format!(
                    "compatibility({a},{b}) must be 0 or 1, got {v}"
                )));
            }
            if (a == 0 || b == 0) && v != 0.0 {
                return Err(GenError::Config(
                    "ghost row/column of the compatibility matrix must be zero".into(),
                ));
            }
            if compat[b][a] != v {
                return Err(GenError::Config(format!(
                    "compatibility matrix is asymmetric at ({a},{b})"
                )));
            }
        }
    }
    Ok(())
}

/// Parameters for compatibility-respecting random graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeCompatibleRecipe {
    pub count: usize,
    pub schema: GraphSchema,
    /// 0/1 matrix with a ghost border; entry `(a, b)` says labels `a` and
    /// `b` may share an edge.
    pub compatibility: Vec<Vec<f64>>,
    /// Probability of wiring each compatible pair.
    pub edge_prob: f64,
    /// Inclusive bounds on the active node count.
    pub node_range: (usize, usize),
}

impl NodeCompatibleRecipe {
    /// The reference recipe: up to 15 nodes, 5 labels, the fixed 5-label
    /// compatibility matrix, node count uniform in 10..=15, edge
    /// probability 0.4.
    pub fn reference(count: usize) -> Self {
        NodeCompatibleRecipe {
            count,
            schema: GraphSchema::new(15, 5, 1).expect("static schema is valid"),
            compatibility: COMPATIBILITY_5.iter().map(|r| r.to_vec()).collect(),
            edge_prob: 0.4,
            node_range: (10, 15),
        }
    }

    fn validate(&self) -> Result<(), GenError> {
        check_compatibility_matrix(&self.compatibility, self.schema.node_types)?;
        if !(0.0..=1.0).contains(&self.edge_prob) {
            return Err(GenError::Config(format!(
                "edge probability must lie in [0, 1], got {}",
                self.edge_prob
            )));
        }
        let (lo, hi) = self.node_range;
        if lo < 1 || lo > hi || hi > self.schema.max_nodes {
            return Err(GenError::Config(format!(
                "node range {lo}..={hi} must fit 1..={}",
                self.schema.max_nodes
            )));
        }
        Ok(())
    }
}

/// Generate compatibility-respecting random graphs. Outputs are active-first
/// (ghosts padded at the end) and need not be connected.
pub fn gen_node_compatible(
    recipe: &NodeCompatibleRecipe,
    seed: u64,
) -> Result<Vec<GraphOneHot>, GenError> {
    recipe.validate()?;
    let (lo, hi) = recipe.node_range;
    let schema = recipe.schema;
    let mut out = Vec::with_capacity(recipe.count);
    for index in 0..recipe.count {
        let mut rng = derive_rng(seed, &format!("node-compatible/{index}"));
        let n = rng.random_range(lo..=hi);
        let mut g = GraphOneHot::empty(schema);
        for i in 0..n {
            g.set_node_label(i, rng.random_range(1..=schema.node_types));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let compatible =
                    recipe.compatibility[g.node_label(i)][g.node_label(j)] == 1.0;
                if compatible && rng.random::<f64>() < recipe.edge_prob {
                    g.set_edge_label(i, j, rng.random_range(1..=schema.edge_types));
                }
            }
        }
        out.push(g);
    }
    Ok(out)
}

/// Parameters for sequentially grown toy molecules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyMoleculeRecipe {
    pub count: usize,
    pub schema: GraphSchema,
    /// Valence capacity per node label (index 0 unused).
    pub valences: Vec<f64>,
    /// Probability that a growth step closes a ring instead of attaching a
    /// new atom.
    pub ring_prob: f64,
}

impl ToyMoleculeRecipe {
    /// C/N/O/H-style atoms (valences 4/3/2/1) with single, double, and
    /// triple bonds on up to 8 atoms.
    pub fn chon(count: usize) -> Self {
        ToyMoleculeRecipe {
            count,
            schema: GraphSchema::new(8, 4, 3).expect("static schema is valid"),
            valences: vec![4.0, 3.0, 2.0, 1.0],
            ring_prob: 0.2,
        }
    }

    fn validate(&self) -> Result<(), GenError> {
        if self.valences.len() != self.schema.node_types {
            return Err(GenError::Config(format!(
                "{} valences for {} node labels",
                self.valences.len(),
                self.schema.node_types
            )));
        }
        if self
            .valences
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0 && v.fract() == 0.0))
        {
            return Err(GenError::Config(format!(
                "valences must be nonnegative integers, got {:?}",
                self.valences
            )));
        }
        if self.valences.iter().all(|&v| v < 1.0) {
            return Err(GenError::UnattainableValence(self.valences.clone()));
        }
        if !(0.0..=1.0).contains(&self.ring_prob) {
            return Err(GenError::Config(format!(
                "ring probability must lie in [0, 1], got {}",
                self.ring_prob
            )));
        }
        Ok(())
    }
}

/// Grow one molecule: start from a random atom, then repeatedly either
/// attach a new atom to a host with spare valence or close a ring between
/// two non-adjacent atoms, with bond order bounded by both endpoints'
/// residual valence. Stops at the target size or when no move is legal.
fn grow_molecule(recipe: &ToyMoleculeRecipe, rng: &mut ChaCha8Rng) -> GraphOneHot {
    let schema = recipe.schema;
    let usable: Vec<usize> = (1..=schema.node_types)
        .filter(|&c| recipe.valences[c - 1] >= 1.0)
        .collect();
    let target = rng.random_range(1..=schema.max_nodes);
    let mut g = GraphOneHot::empty(schema);
    g.set_node_label(0, usable[rng.random_range(0..usable.len())]);
    let mut active = 1;
    let mut residual = vec![0usize; schema.max_nodes];
    residual[0] = recipe.valences[g.node_label(0) - 1] as usize;

    while active < target {
        let try_ring = rng.random::<f64>() < recipe.ring_prob;
        let mut grew = false;
        if try_ring {
            let candidates: Vec<(usize, usize)> = (0..active)
                .flat_map(|i| ((i + 1)..active).map(move |j| (i, j)))
                .filter(|&(i, j)| {
                    residual[i] >= 1 && residual[j] >= 1 && g.edge_label(i, j) == 0
                })
                .collect();
            if !candidates.is_empty() {
                let (i, j) = candidates[rng.random_range(0..candidates.len())];
                let cap = residual[i].min(residual[j]).min(schema.edge_types);
                let bond = rng.random_range(1..=cap);
                g.set_edge_label(i, j, bond);
                residual[i] -= bond;
                residual[j] -= bond;
                grew = true;
            }
        }
        if !grew {
            let hosts: Vec<usize> = (0..active).filter(|&v| residual[v] >= 1).collect();
            if hosts.is_empty() {
                break; // saturated; the molecule is complete
            }
            let host = hosts[rng.random_range(0..hosts.len())];
            let label = usable[rng.random_range(0..usable.len())];
            let cap = residual[host]
                .min(recipe.valences[label - 1] as usize)
                .min(schema.edge_types);
            let bond = rng.random_range(1..=cap);
            g.set_node_label(active, label);
            g.set_edge_label(host, active, bond);
            residual[active] = recipe.valences[label - 1] as usize - bond;
            residual[host] -= bond;
            active += 1;
        }
    }
    g
}

/// Generate connected, valence-satisfying toy molecules.
pub fn gen_toy_molecules(
    recipe: &ToyMoleculeRecipe,
    seed: u64,
) -> Result<Vec<GraphOneHot>, GenError> {
    recipe.validate()?;
    Ok((0..recipe.count)
        .map(|index| {
            let mut rng = derive_rng(seed, &format!("toy-molecules/{index}"));
            grow_molecule(recipe, &mut rng)
        })
        .collect())
}

/// Parameters for incompatible-edge corruption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionRecipe {
    /// Inclusive bounds on insertions per graph (default 1..=3).
    pub insertions: (usize, usize),
    /// Compatibility matrix defining which pairs are incompatible.
    pub compatibility: Vec<Vec<f64>>,
}

impl CorruptionRecipe {
    pub fn reference() -> Self {
        CorruptionRecipe {
            insertions: (1, 3),
            compatibility: COMPATIBILITY_5.iter().map(|r| r.to_vec()).collect(),
        }
    }

    fn validate(&self, node_types: usize) -> Result<(), GenError> {
        check_compatibility_matrix(&self.compatibility, node_types)?;
        if self.insertions.0 > self.insertions.1 {
            return Err(GenError::Config(format!(
                "insertion range {}..={} is empty",
                self.insertions.0, self.insertions.1
            )));
        }
        Ok(())
    }
}

/// Insert edges between currently-absent incompatible active pairs: each
/// graph gains a uniform number of insertions from the recipe's range,
/// capped by how many such pairs it has.
pub fn corrupt_with_incompatible_edges(
    dataset: &[GraphOneHot],
    recipe: &CorruptionRecipe,
    seed: u64,
) -> Result<Vec<GraphOneHot>, GenError> {
    if let Some(g) = dataset.first() {
        recipe.validate(g.schema().node_types)?;
    }
    Ok(dataset
        .iter()
        .enumerate()
        .map(|(index, g)| {
            let mut rng = derive_rng(seed, &format!("corrupt/{index}"));
            let mut out = g.clone();
            let schema = g.schema();
            let mut candidates: Vec<(usize, usize)> = schema
                .pairs()
                .filter(|&(i, j)| {
                    !g.is_ghost(i)
                        && !g.is_ghost(j)
                        && g.edge_label(i, j) == 0
                        && recipe.compatibility[g.node_label(i)][g.node_label(j)] == 0.0
                })
                .collect();
            let k = rng
                .random_range(recipe.insertions.0..=recipe.insertions.1)
                .min(candidates.len());
            for _ in 0..k {
                let pick = rng.random_range(0..candidates.len());
                let (i, j) = candidates.swap_remove(pick);
                out.set_edge_label(i, j, rng.random_range(1..=schema.edge_types));
            }
            out
        })
        .collect())
}

/// Sidecar record describing how a dataset file was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case")]
pub enum DatasetManifest {
    NodeCompatible {
        recipe: NodeCompatibleRecipe,
        seed: u64,
    },
    ToyMolecules {
        recipe: ToyMoleculeRecipe,
        seed: u64,
    },
    Corrupted {
        recipe: CorruptionRecipe,
        seed: u64,
        /// Dataset file the corruption was applied to.
        source: String,
    },
}

impl DatasetManifest {
    pub fn save(&self, path: &std::path::Path) -> Result<(), std::io::Error> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}
