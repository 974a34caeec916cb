//! Experiment configuration files.
//!
//! One TOML file describes a whole experiment: the task, the graph schema,
//! the validity constraints, the model architecture, and the protocols for
//! data generation, training and evaluation. Only `task` and `[schema]` are
//! required; everything else has defaults, so a minimal file is three lines.
//! [`ExperimentConfig::resolve`] materializes those defaults into an
//! [`Experiment`], which is what run manifests record: a reader of the
//! manifest sees every effective value, not just the ones the author wrote.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{ConstraintError, ConstraintSpec};
use crate::datagen::{CorruptionRecipe, NodeCompatibleRecipe, ToyMoleculeRecipe};
use crate::eval::EvalConfig;
use crate::graph::GraphSchema;
use crate::oracles::Task;
use crate::trainer::{TrainConfig, TrainError, TrainSetup};
use crate::vae::VaeConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid experiment config: {0}")]
    Invalid(String),
}

impl From<ConstraintError> for ConfigError {
    fn from(e: ConstraintError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

impl From<TrainError> for ConfigError {
    fn from(e: TrainError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

/// Architecture half of a config file; combined with the schema this becomes
/// a [`VaeConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub latent_dim: usize,
    pub hidden_dims: [usize; 2],
    pub trainable_prior: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            latent_dim: 32,
            hidden_dims: [256, 256],
            trainable_prior: true,
        }
    }
}

/// Dataset generation and corruption parameters. `valences` seeds the
/// default molecular constraint; once a constraint is resolved, recipes read
/// capacities back from it so the two can never disagree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSection {
    /// Graphs per generated dataset (default 2000).
    pub count: usize,
    /// Wiring probability for compatible pairs on the node-compatible task.
    pub edge_prob: f64,
    /// Inclusive range of active-node counts on the node-compatible task.
    pub node_range: (usize, usize),
    /// Per-label capacities used when no explicit `[constraint]` is given
    /// for the molecular task.
    pub valences: Vec<f64>,
    /// Chance of closing a ring instead of attaching a fresh atom.
    pub ring_prob: f64,
    /// Inclusive range of incompatible edges inserted per corrupted graph.
    pub insertions: (usize, usize),
    /// Stream seed for generation and corruption (command-line flags win).
    pub seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            count: 2000,
            edge_prob: 0.4,
            node_range: (10, 15),
            valences: vec![4.0, 3.0, 2.0, 1.0],
            ring_prob: 0.2,
            insertions: (1, 3),
            seed: 0,
        }
    }
}

/// A config file as written: required task and schema, everything else
/// optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: Task,
    pub schema: GraphSchema,
    /// Omitted means "use the task's standard constraint": the five-label
    /// compatibility matrix for the node-compatible task (which requires a
    /// five-label schema) or capacities from `data.valences` for the
    /// molecular one.
    #[serde(default)]
    pub constraint: Option<ConstraintSpec>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub data: DataSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: "<inline>".into(),
            message: e.to_string(),
        })
    }

    /// Fill in every default and validate the result.
    pub fn resolve(self) -> Result<Experiment, ConfigError> {
        let schema = self.schema;
        let constraint = match self.constraint {
            Some(c) => c,
            None => match self.task {
                Task::NodeCompatible => {
                    if schema.node_types != 5 || schema.edge_types != 1 {
                        return Err(ConfigError::Invalid(format!(
                            "the built-in compatibility matrix covers 5 node types and 1 edge \
                             type, not {}/{}; add an explicit [constraint] table",
                            schema.node_types, schema.edge_types
                        )));
                    }
                    ConstraintSpec::node_compatible_default(schema.max_nodes)
                }
                Task::Molecular => {
                    if self.data.valences.len() != schema.node_types {
                        return Err(ConfigError::Invalid(format!(
                            "data.valences lists {} capacities but the schema has {} node types",
                            self.data.valences.len(),
                            schema.node_types
                        )));
                    }
                    ConstraintSpec::molecular(&self.data.valences, schema.edge_types)
                }
            },
        };
        constraint.validate_for(schema)?;

        let model = VaeConfig {
            schema,
            latent_dim: self.model.latent_dim,
            hidden_dims: self.model.hidden_dims,
            trainable_prior: self.model.trainable_prior,
        };
        model
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.train.validate()?;
        if self.eval.n_samples == 0 {
            return Err(ConfigError::Invalid("eval.n_samples must be positive".into()));
        }
        if self.task == Task::NodeCompatible {
            let (lo, hi) = self.data.node_range;
            if lo > hi || hi > schema.max_nodes {
                return Err(ConfigError::Invalid(format!(
                    "data.node_range ({lo}, {hi}) must be increasing and fit max_nodes {}",
                    schema.max_nodes
                )));
            }
        }

        Ok(Experiment {
            task: self.task,
            constraint,
            model,
            train: self.train,
            eval: self.eval,
            data: self.data,
        })
    }
}

/// A fully resolved experiment: no options left, every default materialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub task: Task,
    pub constraint: ConstraintSpec,
    pub model: VaeConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub data: DataSection,
}

impl Experiment {
    pub fn schema(&self) -> GraphSchema {
        self.model.schema
    }

    pub fn train_setup(&self) -> TrainSetup {
        TrainSetup {
            model: self.model,
            task: self.task,
            constraint: self.constraint.clone(),
            train: self.train,
        }
    }

    /// Generation recipe for the task this experiment is about.
    /// Capacities and compatibilities come from the resolved constraint, so
    /// generated data always matches what training penalizes.
    pub fn node_compatible_recipe(&self) -> NodeCompatibleRecipe {
        NodeCompatibleRecipe {
            count: self.data.count,
            schema: self.schema(),
            compatibility: self.constraint.compatibility.clone(),
            edge_prob: self.data.edge_prob,
            node_range: self.data.node_range,
        }
    }

    pub fn toy_molecule_recipe(&self) -> ToyMoleculeRecipe {
        ToyMoleculeRecipe {
            count: self.data.count,
            schema: self.schema(),
            valences: self.constraint.node_capacity[1..].to_vec(),
            ring_prob: self.data.ring_prob,
        }
    }

    pub fn corruption_recipe(&self) -> CorruptionRecipe {
        CorruptionRecipe {
            insertions: self.data.insertions,
            compatibility: self.constraint.compatibility.clone(),
        }
    }
}
