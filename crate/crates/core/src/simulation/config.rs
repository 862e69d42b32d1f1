//! Experiment configuration. Deserialized strictly: unknown keys are errors.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::aggregators::AggregatorKind;
use crate::error::{Error, Result};
use crate::models::Activation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub federation: FederationConfig,
    pub aggregator: AggregatorConfig,
    #[serde(default)]
    pub seeds: SeedConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetConfig {
    Synthetic {
        #[serde(default = "defaults::classes")]
        classes: usize,
        #[serde(default = "defaults::dims")]
        dims: usize,
        #[serde(default = "defaults::samples")]
        samples: usize,
        #[serde(default = "defaults::class_sep")]
        class_sep: f64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        limit: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub clients: usize,
    pub alpha: f64,
    pub min_per_client: usize,
    pub train_fraction: f64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            clients: 50,
            alpha: 0.1,
            min_per_client: 20,
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![200, 200],
            activation: Activation::Relu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationConfig {
    pub clients_per_round: usize,
    pub rounds: usize,
    pub local_lr: f64,
    pub server_lr: f64,
    /// Multiplicative per-round decay of `local_lr`.
    pub lr_decay: f64,
    pub batch_size: usize,
    /// Use every local training sample in every step.
    pub full_batch: bool,
    /// Fixed number of local steps; by default one local epoch.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub local_steps: Option<usize>,
    /// Client-side proximal coefficient (FedProx).
    pub prox_mu: f64,
    pub eval_every: usize,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            clients_per_round: 10,
            rounds: 100,
            local_lr: 0.05,
            server_lr: 1.0,
            lr_decay: 0.999,
            batch_size: 50,
            full_batch: false,
            local_steps: None,
            prox_mu: 0.0,
            eval_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregatorConfig {
    pub kind: AggregatorKind,
    #[serde(default = "defaults::eps")]
    pub eps: f64,
    #[serde(default = "defaults::tau")]
    pub tau: f64,
    #[serde(default = "defaults::rank_tol")]
    pub rank_tol: f64,
    #[serde(default = "defaults::beta")]
    pub beta: f64,
    #[serde(default = "defaults::beta1")]
    pub beta1: f64,
    #[serde(default = "defaults::beta2")]
    pub beta2: f64,
    #[serde(default = "defaults::tau_adapt")]
    pub tau_adapt: f64,
}

impl AggregatorConfig {
    pub fn new(kind: AggregatorKind) -> Self {
        Self {
            kind,
            eps: defaults::eps(),
            tau: defaults::tau(),
            rank_tol: defaults::rank_tol(),
            beta: defaults::beta(),
            beta1: defaults::beta1(),
            beta2: defaults::beta2(),
            tau_adapt: defaults::tau_adapt(),
        }
    }
}

/// Independent seeds for every source of randomness.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    /// Synthetic data generation.
    pub data: u64,
    /// Dirichlet partition and local train/test splits.
    pub partition: u64,
    /// Model initialization.
    pub init: u64,
    /// Per-round client sampling.
    pub sampling: u64,
    /// Local mini-batch shuffling.
    pub training: u64,
}

impl SeedConfig {
    pub const NAMES: [&'static str; 5] = ["data", "partition", "init", "sampling", "training"];

    pub fn set(&mut self, name: &str, value: u64) -> Result<()> {
        let slot = match name {
            "data" => &mut self.data,
            "partition" => &mut self.partition,
            "init" => &mut self.init,
            "sampling" => &mut self.sampling,
            "training" => &mut self.training,
            other => {
                return Err(Error::config(
                    format!("seeds.{other}"),
                    format!("unknown seed; expected one of {}", Self::NAMES.join(", ")),
                ))
            }
        };
        *slot = value;
        Ok(())
    }
}

mod defaults {
    pub fn classes() -> usize {
        10
    }
    pub fn dims() -> usize {
        20
    }
    pub fn samples() -> usize {
        2000
    }
    pub fn class_sep() -> f64 {
        3.0
    }
    pub fn eps() -> f64 {
        crate::projection::DEFAULT_EPS
    }
    pub fn tau() -> f64 {
        crate::aggregators::DEFAULT_TAU
    }
    pub fn rank_tol() -> f64 {
        crate::projection::DEFAULT_RANK_TOL
    }
    pub fn beta() -> f64 {
        0.9
    }
    pub fn beta1() -> f64 {
        0.9
    }
    pub fn beta2() -> f64 {
        0.99
    }
    pub fn tau_adapt() -> f64 {
        1e-3
    }
}

fn positive(key: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be positive and finite, got {value}")))
    }
}

fn unit_interval(key: &str, value: f64) -> Result<()> {
    if (0.0..1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::config(key, format!("must lie in [0, 1), got {value}")))
    }
}

fn at_least(key: &str, value: usize, min: usize) -> Result<()> {
    if value >= min {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be at least {min}, got {value}")))
    }
}

impl ExperimentConfig {
    /// Defaults everywhere except the data source and the aggregator.
    pub fn new(dataset: DatasetConfig, kind: AggregatorKind) -> Self {
        Self {
            dataset,
            partition: PartitionConfig::default(),
            model: ModelConfig::default(),
            federation: FederationConfig::default(),
            aggregator: AggregatorConfig::new(kind),
            seeds: SeedConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.dataset {
            DatasetConfig::Synthetic {
                classes,
                dims,
                samples,
                class_sep,
            } => {
                at_least("dataset.classes", *classes, 1)?;
                at_least("dataset.dims", *dims, 1)?;
                at_least("dataset.samples", *samples, 1)?;
                if !(class_sep.is_finite() && *class_sep >= 0.0) {
                    return Err(Error::config("dataset.class_sep", "must be finite and non-negative"));
                }
            }
            DatasetConfig::Idx { limit, .. } => {
                if let Some(l) = limit {
                    at_least("dataset.limit", *l, 1)?;
                }
            }
        }

        let p = &self.partition;
        at_least("partition.clients", p.clients, 1)?;
        positive("partition.alpha", p.alpha)?;
        at_least("partition.min_per_client", p.min_per_client, 2)?;
        if !(p.train_fraction > 0.0 && p.train_fraction < 1.0) {
            return Err(Error::config("partition.train_fraction", "must lie in (0, 1)"));
        }

        if self.model.hidden.contains(&0) {
            return Err(Error::config("model.hidden", "hidden layer widths must be at least 1"));
        }

        let f = &self.federation;
        at_least("federation.rounds", f.rounds, 1)?;
        at_least("federation.clients_per_round", f.clients_per_round, 1)?;
        if f.clients_per_round > p.clients {
            return Err(Error::config(
                "federation.clients_per_round",
                format!(
                    "{} active clients per round exceeds partition.clients = {}",
                    f.clients_per_round, p.clients
                ),
            ));
        }
        positive("federation.local_lr", f.local_lr)?;
        if !(f.server_lr.is_finite() && f.server_lr >= 0.0) {
            return Err(Error::config("federation.server_lr", "must be finite and non-negative"));
        }
        if !(f.lr_decay > 0.0 && f.lr_decay <= 1.0) {
            return Err(Error::config("federation.lr_decay", "must lie in (0, 1]"));
        }
        at_least("federation.batch_size", f.batch_size, 1)?;
        if let Some(k) = f.local_steps {
            at_least("federation.local_steps", k, 1)?;
        }
        if !(f.prox_mu.is_finite() && f.prox_mu >= 0.0) {
            return Err(Error::config("federation.prox_mu", "must be finite and non-negative"));
        }
        at_least("federation.eval_every", f.eval_every, 1)?;

        let a = &self.aggregator;
        positive("aggregator.eps", a.eps)?;
        positive("aggregator.tau", a.tau)?;
        positive("aggregator.rank_tol", a.rank_tol)?;
        unit_interval("aggregator.beta", a.beta)?;
        unit_interval("aggregator.beta1", a.beta1)?;
        unit_interval("aggregator.beta2", a.beta2)?;
        positive("aggregator.tau_adapt", a.tau_adapt)?;
        Ok(())
    }
}
