//! Variational autoencoder over probabilistic graphs.
//!
//! The encoder flattens a graph's node-label matrix and unfolded edge-label
//! tensor into one wide row, pushes it through a two-hidden-layer relu MLP,
//! and emits the mean and log-variance of a factored Gaussian posterior. The
//! decoder maps a latent vector back to node logits and upper-triangle edge
//! logits, softmaxes each row/fiber, and mirrors the triangle into a
//! symmetric edge tensor. The prior is a factored Gaussian with trainable
//! mean and log-variance.
//!
//! The training objective is the negative evidence lower bound — closed-form
//! KL between the diagonal Gaussians plus a one-sample reconstruction
//! likelihood — optionally augmented with the validity regularizer evaluated
//! at a "synthetic" latent vector drawn from the prior, which is the
//! Monte-Carlo form of marginalizing the ramped constraint penalties over
//! the prior. Everything is built on the gradient tape, and all sampling is
//! reparameterized so gradients reach the posterior and prior parameters.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::ConstraintSpec;
use crate::graph::{GraphError, GraphOneHot, GraphProb, GraphSchema};
use crate::oracles::Task;
use crate::penalties::{total_regularizer, GraphProbVar, PenaltyError, RegWeights};
use crate::rng::derive_rng;
use crate::tape::{Tape, Var};
use crate::tensor::{Tensor, TensorError};

/// Posterior and prior standard deviations never drop below this.
pub const SIGMA_FLOOR: f64 = 1e-4;

/// Standard deviation of freshly initialized weight matrices.
pub const INIT_STD: f64 = 0.02;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum VaeError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Penalty(#[from] PenaltyError),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VaeConfig {
    pub schema: GraphSchema,
    pub latent_dim: usize,
    pub hidden_dims: [usize; 2],
    /// When off, the prior stays at its initialization (mean 0, variance 1).
    pub trainable_prior: bool,
}

impl VaeConfig {
    /// Desk-scale defaults: latent 32, hidden layers 256/256, trainable
    /// prior.
    pub fn desk_default(schema: GraphSchema) -> Self {
        VaeConfig {
            schema,
            latent_dim: 32,
            hidden_dims: [256, 256],
            trainable_prior: true,
        }
    }

    pub fn validate(&self) -> Result<(), VaeError> {
        if self.schema.max_nodes < 2 {
            return Err(VaeError::Config(
                "schema needs at least 2 nodes (1-node graphs have no edge head)".into(),
            ));
        }
        if self.latent_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(VaeError::Config(
                "latent and hidden dimensions must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Width of a flattened input row: `N(1+d) + N^2(1+t)`.
    pub fn input_dim(&self) -> usize {
        let s = self.schema;
        s.max_nodes * s.node_channels() + s.max_nodes * s.max_nodes * s.edge_channels()
    }

    /// Width of the decoder's node head: `N(1+d)`.
    pub fn node_logit_dim(&self) -> usize {
        self.schema.max_nodes * self.schema.node_channels()
    }

    /// Width of the decoder's edge head: one fiber per unordered pair.
    pub fn edge_logit_dim(&self) -> usize {
        self.schema.pair_count() * self.schema.edge_channels()
    }

    /// Parameter names with their shapes, in fixed storage order.
    fn parameter_shapes(&self) -> Vec<(&'static str, Vec<usize>, bool)> {
        let [h1, h2] = self.hidden_dims;
        let l = self.latent_dim;
        let input = self.input_dim();
        let nf = self.node_logit_dim();
        let ne = self.edge_logit_dim();
        // (name, shape, randomly initialized)
        vec![
            ("enc_w1", vec![input, h1], true),
            ("enc_b1", vec![1, h1], false),
            ("enc_w2", vec![h1, h2], true),
            ("enc_b2", vec![1, h2], false),
            ("enc_w_mean", vec![h2, l], true),
            ("enc_b_mean", vec![1, l], false),
            ("enc_w_logvar", vec![h2, l], true),
            ("enc_b_logvar", vec![1, l], false),
            ("dec_w1", vec![l, h1], true),
            ("dec_b1", vec![1, h1], false),
            ("dec_w2", vec![h1, h2], true),
            ("dec_b2", vec![1, h2], false),
            ("dec_w_node", vec![h2, nf], true),
            ("dec_b_node", vec![1, nf], false),
            ("dec_w_edge", vec![h2, ne], true),
            ("dec_b_edge", vec![1, ne], false),
            ("prior_mean", vec![1, l], false),
            ("prior_logvar", vec![1, l], false),
        ]
    }
}

/// All trainable tensors, keyed by name in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeParams {
    names: Vec<&'static str>,
    tensors: Vec<Tensor>,
}

impl VaeParams {
    /// Weight matrices drawn from a zero-mean normal with standard deviation
    /// [`INIT_STD`]; biases, prior mean, and prior log-variance start at
    /// zero (so the prior starts as a standard normal).
    pub fn init(config: &VaeConfig, rng: &mut ChaCha8Rng) -> Self {
        Self::init_scaled(config, INIT_STD, rng)
    }

    /// [`VaeParams::init`] with an explicit weight standard deviation.
    pub fn init_scaled(config: &VaeConfig, std: f64, rng: &mut ChaCha8Rng) -> Self {
        let normal = StandardNormal;
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (name, shape, random) in config.parameter_shapes() {
            let t = if random {
                let data = (0..shape.iter().product::<usize>())
                    .map(|_| {
                        let eps: f64 = normal.sample(rng);
                        std * eps
                    })
                    .collect();
                Tensor::new(shape, data).expect("shape/data sizes agree")
            } else {
                Tensor::zeros(&shape)
            };
            names.push(name);
            tensors.push(t);
        }
        VaeParams { names, tensors }
    }

    pub fn named(&self) -> impl Iterator<Item = (&'static str, &Tensor)> {
        self.names.iter().copied().zip(self.tensors.iter())
    }

    pub fn named_mut(&mut self) -> impl Iterator<Item = (&'static str, &mut Tensor)> {
        self.names.iter().copied().zip(self.tensors.iter_mut())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names
            .iter()
            .position(|&n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn is_all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_all_finite)
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }
}

/// The parameters registered on a tape for one forward/backward pass, in the
/// same order as [`VaeParams::named`].
pub struct VaeVars {
    names: Vec<&'static str>,
    vars: Vec<Var>,
}

impl VaeVars {
    pub fn named(&self) -> impl Iterator<Item = (&'static str, &Var)> {
        self.names.iter().copied().zip(self.vars.iter())
    }

    fn get(&self, name: &str) -> &Var {
        let i = self
            .names
            .iter()
            .position(|&n| n == name)
            .expect("known parameter name");
        &self.vars[i]
    }
}

/// Where a latent vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatentSource {
    Posterior,
    Prior,
}

/// A latent vector of shape `[1, latent_dim]` with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub z: Tensor,
    pub source: LatentSource,
    /// Seed of the stream that produced the noise, when the caller tracked
    /// one (exported alongside latent-walk artifacts).
    pub seed: Option<u64>,
}

/// How many synthetic prior draws the regularizer uses per batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticZ {
    /// One fresh prior draw per batch element (default).
    #[default]
    PerExample,
    /// A single prior draw shared by the whole batch.
    PerBatch,
}

/// Scalar summary of one loss evaluation, averaged over the batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub loss: f64,
    pub neg_elbo: f64,
    pub kl: f64,
    pub reconstruction: f64,
    pub regularizer: f64,
}

/// A loss expression ready for the backward pass.
pub struct BatchLoss {
    pub tape: Tape,
    pub vars: VaeVars,
    pub loss: Var,
    pub parts: LossParts,
}

/// Decomposed single-graph bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboValue {
    pub elbo: f64,
    pub kl: f64,
    pub reconstruction: f64,
}

#[derive(Debug, Clone)]
pub struct Vae {
    pub config: VaeConfig,
    pub params: VaeParams,
}

impl Vae {
    pub fn init(config: VaeConfig, seed: u64) -> Result<Self, VaeError> {
        Self::init_with_scale(config, INIT_STD, seed)
    }

    /// Initialize with an explicit weight standard deviation.
    pub fn init_with_scale(config: VaeConfig, scale: f64, seed: u64) -> Result<Self, VaeError> {
        config.validate()?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(VaeError::Config(format!(
                "init scale must be positive and finite, got {scale}"
            )));
        }
        let mut rng = derive_rng(seed, "vae-init");
        Ok(Vae {
            params: VaeParams::init_scaled(&config, scale, &mut rng),
            config,
        })
    }

    /// Put every parameter on the tape. The prior tensors become constants
    /// when the prior is frozen, so they simply report no gradient.
    pub fn register(&self, tape: &Tape) -> VaeVars {
        let mut names = Vec::new();
        let mut vars = Vec::new();
        for (name, tensor) in self.params.named() {
            let frozen_prior =
                !self.config.trainable_prior && (name == "prior_mean" || name == "prior_logvar");
            let var = if frozen_prior {
                tape.constant(tensor.clone())
            } else {
                tape.leaf(tensor.clone())
            };
            names.push(name);
            vars.push(var);
        }
        VaeVars { names, vars }
    }

    /// Flatten a graph into the encoder's input row: for each node, its
    /// one-hot label row followed by its `N` one-hot edge fibers.
    pub fn input_tensor(&self, g: &GraphOneHot) -> Result<Tensor, VaeError> {
        self.check_schema(g.schema())?;
        let s = self.config.schema;
        let f = g.node_matrix();
        let e = g.edge_tensor();
        let mut data = Vec::with_capacity(self.config.input_dim());
        for i in 0..s.max_nodes {
            for r in 0..s.node_channels() {
                data.push(f.get2(i, r));
            }
            for j in 0..s.max_nodes {
                for k in 0..s.edge_channels() {
                    data.push(e.get3(i, j, k));
                }
            }
        }
        Ok(Tensor::new(vec![1, self.config.input_dim()], data)?)
    }

    fn check_schema(&self, got: GraphSchema) -> Result<(), VaeError> {
        if got != self.config.schema {
            return Err(VaeError::Config(format!(
                "graph schema {got:?} does not match model schema {:?}",
                self.config.schema
            )));
        }
        Ok(())
    }

    /// Posterior head on the tape: mean and floored standard deviation,
    /// both `[1, latent_dim]`.
    pub fn encode_on(&self, vars: &VaeVars, x: &Var) -> Result<(Var, Var), VaeError> {
        let h1 = x
            .matmul(vars.get("enc_w1"))?
            .add(vars.get("enc_b1"))?
            .relu();
        let h2 = h1
            .matmul(vars.get("enc_w2"))?
            .add(vars.get("enc_b2"))?
            .relu();
        let mean = h2
            .matmul(vars.get("enc_w_mean"))?
            .add(vars.get("enc_b_mean"))?;
        let logvar = h2
            .matmul(vars.get("enc_w_logvar"))?
            .add(vars.get("enc_b_logvar"))?;
        let sigma = logvar.mul_scalar(0.5).exp().max_scalar(SIGMA_FLOOR);
        Ok((mean, sigma))
    }

    /// Floored prior standard deviation on the tape, `[1, latent_dim]`.
    pub fn prior_sigma_on(&self, vars: &VaeVars) -> Var {
        vars.get("prior_logvar")
            .mul_scalar(0.5)
            .exp()
            .max_scalar(SIGMA_FLOOR)
    }

    /// Decoder on the tape: latent row to a probabilistic graph.
    pub fn decode_on(&self, vars: &VaeVars, z: &Var) -> Result<GraphProbVar, VaeError> {
        let s = self.config.schema;
        let h1 = z
            .matmul(vars.get("dec_w1"))?
            .add(vars.get("dec_b1"))?
            .relu();
        let h2 = h1
            .matmul(vars.get("dec_w2"))?
            .add(vars.get("dec_b2"))?
            .relu();
        let f = h2
            .matmul(vars.get("dec_w_node"))?
            .add(vars.get("dec_b_node"))?
            .reshape(&[s.max_nodes, s.node_channels()])?
            .softmax_last();
        let e = h2
            .matmul(vars.get("dec_w_edge"))?
            .add(vars.get("dec_b_edge"))?
            .reshape(&[s.pair_count(), s.edge_channels()])?
            .softmax_last()
            .mirror_upper(s.max_nodes)?;
        Ok(GraphProbVar::from_parts(s, f, e)?)
    }

    /// Closed-form KL between the factored Gaussians `N(mean, sigma^2)` and
    /// `N(prior_mean, prior_sigma^2)` as a tape scalar.
    pub fn kl_on(
        mean: &Var,
        sigma: &Var,
        prior_mean: &Var,
        prior_sigma: &Var,
    ) -> Result<Var, VaeError> {
        let log_ratio = prior_sigma
            .log_guarded()
            .sub(&sigma.log_guarded())?
            .mul_scalar(2.0);
        let spread = sigma
            .square()
            .add(&mean.sub(prior_mean)?.square())?
            .div(&prior_sigma.square())?;
        Ok(log_ratio
            .add(&spread)?
            .add_scalar(-1.0)
            .sum_all()
            .mul_scalar(0.5))
    }

    /// Reconstruction log-likelihood of `g` under a decoded graph, on the
    /// tape: one-hot masks pick out each node's label probability and each
    /// upper-triangle pair's edge probability, which are logged (clamped)
    /// and summed.
    fn reconstruction_on(&self, decoded: &GraphProbVar, g: &GraphOneHot) -> Result<Var, VaeError> {
        let s = self.config.schema;
        let tape = decoded.f().tape();
        let f_mask = tape.constant(g.node_matrix());
        let mut e_mask = Tensor::zeros(&[s.max_nodes, s.max_nodes, s.edge_channels()]);
        for (i, j) in s.pairs() {
            e_mask.set3(i, j, g.edge_label(i, j), 1.0);
        }
        let e_mask = tape.constant(e_mask);
        let node_term = decoded.f().log_guarded().mul(&f_mask)?.sum_all();
        let edge_term = decoded.e().log_guarded().mul(&e_mask)?.sum_all();
        Ok(node_term.add(&edge_term)?)
    }

    /// One-sample evidence lower bound for a single graph, on the tape.
    /// Returns `(elbo, kl, reconstruction)`; `eps` is the standard-normal
    /// draw for the reparameterized posterior sample.
    pub fn elbo_on(
        &self,
        vars: &VaeVars,
        g: &GraphOneHot,
        eps: &Tensor,
    ) -> Result<(Var, Var, Var), VaeError> {
        let tape = vars.vars[0].tape();
        let x = tape.constant(self.input_tensor(g)?);
        let (mean, sigma) = self.encode_on(vars, &x)?;
        let z = mean.add(&sigma.mul(&tape.constant(eps.clone()))?)?;
        let decoded = self.decode_on(vars, &z)?;
        let reconstruction = self.reconstruction_on(&decoded, g)?;
        let prior_sigma = self.prior_sigma_on(vars);
        let kl = Self::kl_on(&mean, &sigma, vars.get("prior_mean"), &prior_sigma)?;
        let elbo = reconstruction.sub(&kl)?;
        Ok((elbo, kl, reconstruction))
    }

    fn draw_eps(&self, rng: &mut ChaCha8Rng) -> Tensor {
        let l = self.config.latent_dim;
        let data = (0..l).map(|_| StandardNormal.sample(rng)).collect();
        Tensor::new(vec![1, l], data).expect("shape/data sizes agree")
    }

    /// Mean regularized training loss over a batch:
    /// `mean_i[-elbo(g_i)] + mean over synthetic draws of the weighted
    /// ramped penalties` at graphs decoded from prior samples. With all
    /// weights zero this is exactly the mean negative ELBO and no synthetic
    /// draw is consumed.
    ///
    /// Noise draw order (one `rng`): per batch element, first the posterior
    /// eps, then (per-example mode) the synthetic eps; in per-batch mode the
    /// single synthetic eps is drawn after all posterior draws.
    pub fn batch_loss(
        &self,
        batch: &[&GraphOneHot],
        spec: &ConstraintSpec,
        weights: &RegWeights,
        mode: SyntheticZ,
        rng: &mut ChaCha8Rng,
    ) -> Result<BatchLoss, VaeError> {
        if batch.is_empty() {
            return Err(VaeError::Config("empty batch".into()));
        }
        let tape = Tape::new();
        let vars = self.register(&tape);
        let prior_mean = vars.get("prior_mean").clone();
        let prior_sigma = self.prior_sigma_on(&vars);
        let regularize = weights.any_enabled();

        let mut neg_elbo_acc: Option<Var> = None;
        let mut reg_acc: Option<Var> = None;
        let mut kl_sum = 0.0;
        let mut recon_sum = 0.0;
        let add_to = |acc: &mut Option<Var>, term: Var| -> Result<(), TensorError> {
            *acc = Some(match acc.take() {
                Some(a) => a.add(&term)?,
                None => term,
            });
            Ok(())
        };

        let synth_penalty =
            |eps: &Tensor, reg_acc: &mut Option<Var>| -> Result<(), VaeError> {
                let z = prior_mean.add(&prior_sigma.mul(&tape.constant(eps.clone()))?)?;
                let decoded = self.decode_on(&vars, &z)?;
                let reg = total_regularizer(&decoded, spec, weights)?;
                add_to(reg_acc, reg)?;
                Ok(())
            };

        for g in batch {
            let eps = self.draw_eps(rng);
            let (elbo, kl, recon) = self.elbo_on(&vars, g, &eps)?;
            kl_sum += kl.item()?;
            recon_sum += recon.item()?;
            add_to(&mut neg_elbo_acc, elbo.neg())?;
            if regularize && mode == SyntheticZ::PerExample {
                let eps_syn = self.draw_eps(rng);
                synth_penalty(&eps_syn, &mut reg_acc)?;
            }
        }
        if regularize && mode == SyntheticZ::PerBatch {
            let eps_syn = self.draw_eps(rng);
            synth_penalty(&eps_syn, &mut reg_acc)?;
        }

        let scale = 1.0 / batch.len() as f64;
        let neg_elbo = neg_elbo_acc.expect("nonempty batch").mul_scalar(scale);
        let (loss, reg_value) = match reg_acc {
            Some(reg) => {
                // Per-batch mode has a single term; per-example has one per
                // element, so the batch scale averages them.
                let reg = match mode {
                    SyntheticZ::PerExample => reg.mul_scalar(scale),
                    SyntheticZ::PerBatch => reg,
                };
                let value = reg.item()?;
                (neg_elbo.add(&reg)?, value)
            }
            None => (neg_elbo.clone(), 0.0),
        };
        let parts = LossParts {
            loss: loss.item()?,
            neg_elbo: neg_elbo.item()?,
            kl: kl_sum * scale,
            reconstruction: recon_sum * scale,
            regularizer: reg_value,
        };
        Ok(BatchLoss {
            tape,
            vars,
            loss,
            parts,
        })
    }

    /// Off-tape posterior parameters `(mean, variance)` for one graph.
    pub fn encode(&self, g: &GraphOneHot) -> Result<(Tensor, Tensor), VaeError> {
        let tape = Tape::new();
        let vars = self.register(&tape);
        let x = tape.constant(self.input_tensor(g)?);
        let (mean, sigma) = self.encode_on(&vars, &x)?;
        Ok((mean.value(), sigma.value().map(|s| s * s)))
    }

    /// Posterior sample `z = mean + sigma * eps` for one graph.
    pub fn sample_posterior(
        &self,
        g: &GraphOneHot,
        rng: &mut ChaCha8Rng,
    ) -> Result<LatentSample, VaeError> {
        let (mean, var) = self.encode(g)?;
        let eps = self.draw_eps(rng);
        let z = Tensor::from_fn(&[1, self.config.latent_dim], |idx| {
            mean.data()[idx[1]] + var.data()[idx[1]].sqrt() * eps.data()[idx[1]]
        });
        Ok(LatentSample {
            z,
            source: LatentSource::Posterior,
            seed: None,
        })
    }

    /// The posterior mean as a latent sample (denoising-style encoding).
    pub fn posterior_mean(&self, g: &GraphOneHot) -> Result<LatentSample, VaeError> {
        let (mean, _) = self.encode(g)?;
        Ok(LatentSample {
            z: mean,
            source: LatentSource::Posterior,
            seed: None,
        })
    }

    /// Map a standard-normal draw through the current prior:
    /// `z = m + s * eps` with the floored standard deviation.
    pub fn prior_z_from_eps(&self, eps: &Tensor) -> Tensor {
        let m = self.params.get("prior_mean").expect("prior params exist");
        let lv = self.params.get("prior_logvar").expect("prior params exist");
        Tensor::from_fn(&[1, self.config.latent_dim], |idx| {
            let s = (0.5 * lv.data()[idx[1]]).exp().max(SIGMA_FLOOR);
            m.data()[idx[1]] + s * eps.data()[idx[1]]
        })
    }

    /// Draw `z = m + s * eps` from the trainable prior.
    pub fn sample_prior(&self, rng: &mut ChaCha8Rng) -> LatentSample {
        let eps = self.draw_eps(rng);
        LatentSample {
            z: self.prior_z_from_eps(&eps),
            source: LatentSource::Prior,
            seed: None,
        }
    }

    /// One standard-normal latent draw, for callers that manage probe noise
    /// themselves.
    pub fn standard_latent_noise(&self, rng: &mut ChaCha8Rng) -> Tensor {
        self.draw_eps(rng)
    }

    /// Off-tape decode of a latent row into a validated probabilistic graph.
    pub fn decode(&self, z: &Tensor) -> Result<GraphProb, VaeError> {
        let expected = [1, self.config.latent_dim];
        if z.shape() != expected {
            return Err(VaeError::Config(format!(
                "latent shape {:?} does not match configured {expected:?}",
                z.shape()
            )));
        }
        let tape = Tape::new();
        let vars = self.register(&tape);
        let zv = tape.constant(z.clone());
        let decoded = self.decode_on(&vars, &zv)?;
        Ok(GraphProb::new(
            self.config.schema,
            decoded.f().value(),
            decoded.e().value(),
        )?)
    }

    /// Off-tape one-sample ELBO of a single graph.
    pub fn elbo(&self, g: &GraphOneHot, rng: &mut ChaCha8Rng) -> Result<ElboValue, VaeError> {
        let tape = Tape::new();
        let vars = self.register(&tape);
        let eps = self.draw_eps(rng);
        let (elbo, kl, recon) = self.elbo_on(&vars, g, &eps)?;
        Ok(ElboValue {
            elbo: elbo.item()?,
            kl: kl.item()?,
            reconstruction: recon.item()?,
        })
    }
}

/// On-disk model snapshot: a JSON document with a version field, the
/// architecture and constraint configuration, the originating seed, and one
/// flat array per named parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: VaeConfig,
    pub task: Task,
    pub constraint: ConstraintSpec,
    pub weights: RegWeights,
    pub seed: u64,
    pub params: Vec<(String, Vec<f64>)>,
}

impl Checkpoint {
    pub fn new(
        vae: &Vae,
        task: Task,
        constraint: ConstraintSpec,
        weights: RegWeights,
        seed: u64,
    ) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: vae.config,
            task,
            constraint,
            weights,
            seed,
            params: vae
                .params
                .named()
                .map(|(name, t)| (name.to_string(), t.data().to_vec()))
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), VaeError> {
        let text = serde_json::to_string(self)
            .map_err(|e| VaeError::Checkpoint(format!("serialization failed: {e}")))?;
        std::fs::write(path, text).map_err(|e| VaeError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self, VaeError> {
        let text = std::fs::read_to_string(path).map_err(|e| VaeError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| VaeError::Checkpoint(format!("parse failed: {e}")))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(VaeError::Checkpoint(format!(
                "version {} not supported (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }

    /// Rebuild the model, validating parameter names, sizes, and finiteness.
    pub fn restore(&self) -> Result<Vae, VaeError> {
        self.config.validate()?;
        self.constraint
            .validate_for(self.config.schema)
            .map_err(|e| VaeError::Checkpoint(e.to_string()))?;
        let mut vae = Vae::init(self.config, self.seed)?;
        let expected: Vec<&'static str> = vae.params.named().map(|(n, _)| n).collect();
        let got: Vec<&str> = self.params.iter().map(|(n, _)| n.as_str()).collect();
        if expected != got {
            return Err(VaeError::Checkpoint(format!(
                "parameter list {got:?} does not match expected {expected:?}"
            )));
        }
        for ((_, tensor), (name, data)) in vae.params.named_mut().zip(&self.params) {
            if tensor.numel() != data.len() {
                return Err(VaeError::Checkpoint(format!(
                    "parameter '{name}' has {} values, expected {}",
                    data.len(),
                    tensor.numel()
                )));
            }
            if data.iter().any(|v| !v.is_finite()) {
                return Err(VaeError::Checkpoint(format!(
                    "parameter '{name}' contains non-finite values"
                )));
            }
            tensor.data_mut().copy_from_slice(data);
        }
        Ok(vae)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use crate::gradcheck::compare_gradients;
    use crate::graph::argmax_decode;
    use crate::tape::backward;
    use rand::SeedableRng;

    fn tiny_config() -> VaeConfig {
        VaeConfig {
            schema: GraphSchema::new(2, 1, 1).unwrap(),
            latent_dim: 3,
            hidden_dims: [6, 5],
            trainable_prior: true,
        }
    }

    fn tiny_spec() -> ConstraintSpec {
        ConstraintSpec::node_compatible(2, vec![vec![0.0, 0.0], vec![0.0, 1.0]])
    }

    fn edge_graph() -> GraphOneHot {
        let mut g = GraphOneHot::empty(GraphSchema::new(2, 1, 1).unwrap());
        g.set_node_label(0, 1);
        g.set_node_label(1, 1);
        g.set_edge_label(0, 1, 1);
        g
    }

    #[test]
    fn encode_shapes_and_positive_variance() {
        let vae = Vae::init(tiny_config(), 7).unwrap();
        let (mean, var) = vae.encode(&edge_graph()).unwrap();
        assert_eq!(mean.shape(), [1, 3]);
        assert_eq!(var.shape(), [1, 3]);
        assert!(var.data().iter().all(|&v| v > 0.0));
        // Deterministic: same input, same output.
        let (mean2, var2) = vae.encode(&edge_graph()).unwrap();
        assert_eq!(mean, mean2);
        assert_eq!(var, var2);
    }

    #[test]
    fn decoded_graphs_satisfy_probability_invariants() {
        for seed in 0..5 {
            let vae = Vae::init(tiny_config(), seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            let z = vae.sample_prior(&mut rng);
            // GraphProb::new inside decode() revalidates rows, fibers,
            // symmetry, and the diagonal.
            vae.decode(&z.z).unwrap();
        }
    }

    #[test]
    fn larger_schema_decode_is_valid_too() {
        let config = VaeConfig {
            schema: GraphSchema::new(5, 4, 3).unwrap(),
            latent_dim: 8,
            hidden_dims: [32, 32],
            trainable_prior: true,
        };
        let vae = Vae::init(config, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let m = vae.decode(&vae.sample_prior(&mut rng).z).unwrap();
        argmax_decode(&m); // exercises the full surface
    }

    #[test]
    fn decode_gradient_wrt_latent_matches_finite_differences() {
        let vae = Vae::init(tiny_config(), 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z0 = vae.sample_prior(&mut rng).z;
        // Fixed random weighting makes the scalar sensitive to every output.
        let wf = Tensor::from_fn(&[2, 2], |idx| 0.3 + 0.7 * (idx[0] + 2 * idx[1]) as f64);
        let we = Tensor::from_fn(&[2, 2, 2], |idx| 0.1 * (1 + idx[0] + idx[1] + idx[2]) as f64);

        let scalar_of = |z: &Tensor| -> f64 {
            let tape = Tape::new();
            let vars = vae.register(&tape);
            let zv = tape.leaf(z.clone());
            let decoded = vae.decode_on(&vars, &zv).unwrap();
            let sf = decoded.f().mul(&tape.constant(wf.clone())).unwrap().sum_all();
            let se = decoded.e().mul(&tape.constant(we.clone())).unwrap().sum_all();
            sf.add(&se).unwrap().item().unwrap()
        };

        let tape = Tape::new();
        let vars = vae.register(&tape);
        let zv = tape.leaf(z0.clone());
        let decoded = vae.decode_on(&vars, &zv).unwrap();
        let sf = decoded.f().mul(&tape.constant(wf.clone())).unwrap().sum_all();
        let se = decoded.e().mul(&tape.constant(we.clone())).unwrap().sum_all();
        let scalar = sf.add(&se).unwrap();
        let grads = backward(&scalar).unwrap();
        let analytic = [grads.wrt_or_zeros(&zv)];
        let mismatches = compare_gradients(
            &[z0],
            &analytic,
            1e-5,
            1e-4,
            1e-6,
            None,
            |t| scalar_of(&t[0]),
        );
        assert!(mismatches.is_empty(), "mismatches: {mismatches:?}");
    }

    #[test]
    fn kl_of_identical_gaussians_is_zero() {
        let tape = Tape::new();
        let mean = tape.leaf(Tensor::new(vec![1, 3], vec![0.3, -1.0, 2.0]).unwrap());
        let sigma = tape.leaf(Tensor::new(vec![1, 3], vec![0.5, 1.5, 0.9]).unwrap());
        let kl = Vae::kl_on(&mean, &sigma, &mean, &sigma).unwrap();
        assert!(kl.item().unwrap().abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_kl_reference_value() {
        // mean 1 vs 0, both variances 1: KL = 0.5.
        let tape = Tape::new();
        let mean = tape.leaf(Tensor::new(vec![1, 1], vec![1.0]).unwrap());
        let sigma = tape.leaf(Tensor::ones(&[1, 1]));
        let pm = tape.leaf(Tensor::zeros(&[1, 1]));
        let ps = tape.leaf(Tensor::ones(&[1, 1]));
        let kl = Vae::kl_on(&mean, &sigma, &pm, &ps).unwrap();
        assert!((kl.item().unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn kl_is_nonnegative_for_random_gaussians() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..50 {
            let tape = Tape::new();
            let draw = |rng: &mut ChaCha8Rng, scale: f64, shift: f64| {
                Tensor::from_fn(&[1, 4], |_| shift + scale * rng.random::<f64>())
            };
            let mean = tape.leaf(draw(&mut rng, 4.0, -2.0));
            let sigma = tape.leaf(draw(&mut rng, 2.0, 0.05));
            let pm = tape.leaf(draw(&mut rng, 4.0, -2.0));
            let ps = tape.leaf(draw(&mut rng, 2.0, 0.05));
            let kl = Vae::kl_on(&mean, &sigma, &pm, &ps).unwrap();
            assert!(kl.item().unwrap() >= -1e-12);
        }
    }

    #[test]
    fn prior_samples_have_the_right_mean() {
        let mut vae = Vae::init(tiny_config(), 5).unwrap();
        // Move the prior somewhere nontrivial.
        for (name, t) in vae.params.named_mut() {
            if name == "prior_mean" {
                t.data_mut().copy_from_slice(&[1.0, -2.0, 0.5]);
            }
            if name == "prior_logvar" {
                t.data_mut().copy_from_slice(&[0.0, 0.0, 0.0]); // s = 1
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 10_000;
        let mut sums = [0.0; 3];
        for _ in 0..n {
            let z = vae.sample_prior(&mut rng).z;
            for (s, v) in sums.iter_mut().zip(z.data()) {
                *s += v;
            }
        }
        let bound = 3.0 / (n as f64).sqrt(); // 3 * s / sqrt(n) with s = 1
        for (s, m) in sums.iter().zip([1.0, -2.0, 0.5]) {
            let mean = s / n as f64;
            assert!((mean - m).abs() < bound, "empirical {mean} vs {m}");
        }
    }

    #[test]
    fn reparameterization_collapses_to_mean_at_floor_variance() {
        let mut vae = Vae::init(tiny_config(), 6).unwrap();
        for (name, t) in vae.params.named_mut() {
            if name == "prior_logvar" {
                // exp(0.5 * -60) is far below the floor.
                t.data_mut().copy_from_slice(&[-60.0, -60.0, -60.0]);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z = vae.sample_prior(&mut rng).z;
        for v in z.data() {
            assert!(v.abs() <= 5.0 * SIGMA_FLOOR, "value {v}");
        }
    }

    #[test]
    fn same_seed_gives_identical_samples_and_losses() {
        let vae = Vae::init(tiny_config(), 21).unwrap();
        let g = edge_graph();
        let batch = [&g];
        let spec = tiny_spec();
        let weights = RegWeights::node_compatible();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            vae.batch_loss(&batch, &spec, &weights, SyntheticZ::PerExample, &mut rng)
                .unwrap()
                .parts
        };
        let a = run(1234);
        let b = run(1234);
        assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        assert_eq!(a.regularizer.to_bits(), b.regularizer.to_bits());
    }

    #[test]
    fn zero_weights_reduce_to_mean_negative_elbo() {
        let vae = Vae::init(tiny_config(), 13).unwrap();
        let g1 = edge_graph();
        let mut g2 = GraphOneHot::empty(GraphSchema::new(2, 1, 1).unwrap());
        g2.set_node_label(0, 1);
        let batch = [&g1, &g2];
        let spec = tiny_spec();

        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let out = vae
            .batch_loss(&batch, &spec, &RegWeights::none(), SyntheticZ::PerExample, &mut rng)
            .unwrap();

        // Replay the same noise stream through per-graph ELBOs.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let e1 = vae.elbo(&g1, &mut rng).unwrap().elbo;
        let e2 = vae.elbo(&g2, &mut rng).unwrap().elbo;
        let expected = -(e1 + e2) / 2.0;
        assert!((out.parts.loss - expected).abs() < 1e-12);
        assert_eq!(out.parts.regularizer, 0.0);
    }

    /// Independent negative-ELBO calculator written with plain loops — no
    /// tape, no shared forward code beyond the parameter tensors.
    fn hand_neg_elbo(vae: &Vae, g: &GraphOneHot, eps: &[f64]) -> f64 {
        let p = |name: &str| vae.params.get(name).unwrap();
        let matvec = |x: &[f64], w: &Tensor, b: &Tensor| -> Vec<f64> {
            let (rows, cols) = (w.shape()[0], w.shape()[1]);
            assert_eq!(rows, x.len());
            (0..cols)
                .map(|c| {
                    b.data()[c]
                        + (0..rows).map(|r| x[r] * w.data()[r * cols + c]).sum::<f64>()
                })
                .collect()
        };
        let relu = |v: Vec<f64>| v.into_iter().map(|x| x.max(0.0)).collect::<Vec<f64>>();

        let x = vae.input_tensor(g).unwrap().into_data();
        let h1 = relu(matvec(&x, p("enc_w1"), p("enc_b1")));
        let h2 = relu(matvec(&h1, p("enc_w2"), p("enc_b2")));
        let mean = matvec(&h2, p("enc_w_mean"), p("enc_b_mean"));
        let logvar = matvec(&h2, p("enc_w_logvar"), p("enc_b_logvar"));
        let sigma: Vec<f64> = logvar
            .iter()
            .map(|lv| (0.5 * lv).exp().max(SIGMA_FLOOR))
            .collect();

        // KL against the standard normal prior (m = 0, s = 1).
        let kl: f64 = mean
            .iter()
            .zip(&sigma)
            .map(|(m, s)| 0.5 * (-2.0 * s.ln() + s * s + m * m - 1.0))
            .sum();

        let z: Vec<f64> = mean
            .iter()
            .zip(&sigma)
            .zip(eps)
            .map(|((m, s), e)| m + s * e)
            .collect();
        let d1 = relu(matvec(&z, p("dec_w1"), p("dec_b1")));
        let d2 = relu(matvec(&d1, p("dec_w2"), p("dec_b2")));
        let f_logits = matvec(&d2, p("dec_w_node"), p("dec_b_node"));
        let e_logits = matvec(&d2, p("dec_w_edge"), p("dec_b_edge"));

        let softmax = |chunk: &[f64]| -> Vec<f64> {
            let m = chunk.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = chunk.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = exps.iter().sum();
            exps.into_iter().map(|v| v / s).collect()
        };

        let s = vae.config.schema;
        let mut recon = 0.0;
        for i in 0..s.max_nodes {
            let probs = softmax(&f_logits[i * s.node_channels()..(i + 1) * s.node_channels()]);
            recon += probs[g.node_label(i)].max(1e-10).ln();
        }
        for (pair, (i, j)) in s.pairs().enumerate() {
            let probs = softmax(&e_logits[pair * s.edge_channels()..(pair + 1) * s.edge_channels()]);
            recon += probs[g.edge_label(i, j)].max(1e-10).ln();
        }
        kl - recon
    }

    #[test]
    fn matches_independent_elbo_calculator() {
        // Frozen standard-normal prior so the hand formula applies.
        let mut config = tiny_config();
        config.trainable_prior = false;
        let vae = Vae::init(config, 31).unwrap();
        let g = edge_graph();
        let batch = [&g];

        let mut rng = ChaCha8Rng::seed_from_u64(3131);
        let out = vae
            .batch_loss(&batch, &tiny_spec(), &RegWeights::none(), SyntheticZ::PerExample, &mut rng)
            .unwrap();

        // Recover the same eps draw.
        let mut rng = ChaCha8Rng::seed_from_u64(3131);
        let eps: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
        let expected = hand_neg_elbo(&vae, &g, &eps);
        assert!(
            (out.parts.loss - expected).abs() < 1e-10,
            "tape {} vs hand {expected}",
            out.parts.loss
        );
    }

    #[test]
    fn loss_gradient_matches_finite_differences_with_frozen_noise() {
        let vae = Vae::init(tiny_config(), 17).unwrap();
        let g1 = edge_graph();
        let mut g2 = GraphOneHot::empty(GraphSchema::new(2, 1, 1).unwrap());
        g2.set_node_label(0, 1);
        let spec = tiny_spec();
        let weights = RegWeights {
            valence: 1.0,
            connectivity: 1.0,
            compatibility: 1.0,
        };
        let noise_seed = 4242;

        let out = {
            let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
            vae.batch_loss(&[&g1, &g2], &spec, &weights, SyntheticZ::PerExample, &mut rng)
                .unwrap()
        };
        let grads = backward(&out.loss).unwrap();
        let names: Vec<&'static str> = out.vars.named().map(|(n, _)| n).collect();
        let analytic: Vec<Tensor> = out
            .vars
            .named()
            .map(|(_, v)| grads.wrt_or_zeros(v))
            .collect();
        let inputs: Vec<Tensor> = vae.params.named().map(|(_, t)| t.clone()).collect();

        let config = vae.config;
        let loss_of = move |tensors: &[Tensor]| -> f64 {
            let mut probe = Vae::init(config, 0).unwrap();
            for ((_, dst), src) in probe.params.named_mut().zip(tensors) {
                dst.data_mut().copy_from_slice(src.data());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
            probe
                .batch_loss(&[&g1, &g2], &spec, &weights, SyntheticZ::PerExample, &mut rng)
                .unwrap()
                .parts
                .loss
        };
        // The step must stay well below the smallest relu pre-activation
        // magnitude, or the centered difference straddles a kink.
        let mismatches = compare_gradients(
            &inputs,
            &analytic,
            1e-6,
            1e-3,
            1e-4,
            None,
            loss_of,
        );
        let described: Vec<String> = mismatches
            .iter()
            .take(5)
            .map(|m| {
                format!(
                    "{}[{}]: analytic {} vs numeric {} (rel {})",
                    names[m.leaf], m.flat_index, m.analytic, m.numeric, m.rel_error
                )
            })
            .collect();
        assert!(mismatches.is_empty(), "mismatches: {described:?}");
    }

    #[test]
    fn frozen_prior_reports_no_gradient() {
        let mut config = tiny_config();
        config.trainable_prior = false;
        let vae = Vae::init(config, 23).unwrap();
        let g = edge_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = vae
            .batch_loss(&[&g], &tiny_spec(), &RegWeights::none(), SyntheticZ::PerExample, &mut rng)
            .unwrap();
        let grads = backward(&out.loss).unwrap();
        for (name, var) in out.vars.named() {
            let g = grads.wrt_or_zeros(var);
            if name == "prior_mean" || name == "prior_logvar" {
                assert!(g.data().iter().all(|&x| x == 0.0), "{name} got a gradient");
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let vae = Vae::init(tiny_config(), 99).unwrap();
        let ckpt = Checkpoint::new(
            &vae,
            Task::NodeCompatible,
            tiny_spec(),
            RegWeights::node_compatible(),
            99,
        );
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        let restored = back.restore().unwrap();
        assert_eq!(restored.params, vae.params);
        assert_eq!(back.task, Task::NodeCompatible);
        assert_eq!(back.seed, 99);
    }

    #[test]
    fn checkpoint_rejects_bad_version_and_shapes() {
        let vae = Vae::init(tiny_config(), 1).unwrap();
        let mut ckpt = Checkpoint::new(
            &vae,
            Task::NodeCompatible,
            tiny_spec(),
            RegWeights::node_compatible(),
            1,
        );
        ckpt.params[0].1.pop();
        assert!(matches!(ckpt.restore(), Err(VaeError::Checkpoint(_))));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut bad_version = Checkpoint::new(
            &vae,
            Task::NodeCompatible,
            tiny_spec(),
            RegWeights::node_compatible(),
            1,
        );
        bad_version.version = 999;
        bad_version.save(&path).unwrap();
        assert!(matches!(
            Checkpoint::load(&path),
            Err(VaeError::Checkpoint(_))
        ));
    }

}
