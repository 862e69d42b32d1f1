//! Communication-round orchestration: client sampling, local training,
//! aggregation, the server step, and per-client evaluation.

mod config;
mod metrics;

pub use config::{
    AggregatorConfig, DatasetConfig, ExperimentConfig, FederationConfig, ModelConfig, PartitionConfig, SeedConfig,
};
pub use metrics::{summarize, Summary};

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregators::{count_conflicts, Aggregator, AggregatorKind, ClientUpdate, ProjectionParams, ServerOptParams};
use crate::data::{dirichlet_partition, load_idx, synthetic_task, ClientSplit, Dataset};
use crate::error::{Error, Result};
use crate::models::{client_delta, local_train, LocalTrainOptions, Mlp, MlpObjective, MlpSpec, Objective, ParamVector};
use crate::scalar::Scalar;

/// Stream-splitting seed derivation (SplitMix64 finalizer over the parts).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

/// `m` distinct clients out of `n`, sorted, uniform and deterministic in
/// `(seed, round)`.
pub fn sample_clients(n: usize, m: usize, round: usize, seed: u64) -> Result<Vec<usize>> {
    if m > n {
        return Err(Error::invalid(format!("cannot sample {m} clients out of {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[round as u64]));
    let mut picked = rand::seq::index::sample(&mut rng, n, m).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Test accuracy of `params` on every client's local test split.
pub fn evaluate<T: Scalar>(
    mlp: &Mlp,
    params: &ParamVector<T>,
    dataset: &Dataset<T>,
    clients: &[ClientSplit],
) -> Result<Vec<f64>> {
    clients
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let (x, y) = dataset.gather(&c.test);
            mlp.accuracy(params, x.view(), &y).map_err(|e| e.for_client(i))
        })
        .collect()
}

/// Per-round metrics and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub sampled: Vec<usize>,
    /// Accuracy of every client on its test split, on evaluation rounds.
    pub accuracies: Option<Vec<f64>>,
    pub summary: Option<Summary>,
    /// Sampled clients whose update has a negative inner product with `g_t`.
    pub conflicts: usize,
    /// Conflicts among clients that defined a constraint row in every layer
    /// (all sampled clients for non-projection aggregators).
    pub active_conflicts: usize,
    /// Norm of the stacked constraint residuals; zero without projection.
    pub residual_norm: f64,
    /// Gram rank per layer (zero marks a fallback layer); empty without projection.
    pub gram_ranks: Vec<usize>,
    pub full_rank: bool,
    pub wall_ms: f64,
}

/// One federated experiment in progress.
pub struct Simulation<T: Scalar> {
    config: ExperimentConfig,
    dataset: Dataset<T>,
    clients: Vec<ClientSplit>,
    mlp: Mlp,
    params: ParamVector<T>,
    aggregator: Aggregator<T>,
    last_update: Option<Vec<T>>,
    round: usize,
}

/// Load or generate the dataset described by `config`.
pub fn load_dataset<T: Scalar>(config: &ExperimentConfig) -> Result<Dataset<T>> {
    match &config.dataset {
        DatasetConfig::Synthetic {
            classes,
            dims,
            samples,
            class_sep,
        } => synthetic_task(*classes, *dims, *samples, *class_sep, config.seeds.data),
        DatasetConfig::Idx { images, labels, limit } => {
            let data = load_idx(images, labels)?;
            Ok(match limit {
                Some(n) => data.truncate(*n),
                None => data,
            })
        }
    }
}

impl<T: Scalar> Simulation<T> {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let dataset = load_dataset(config)?;
        Self::with_dataset(config, dataset)
    }

    pub fn with_dataset(config: &ExperimentConfig, dataset: Dataset<T>) -> Result<Self> {
        config.validate()?;
        let p = &config.partition;
        let partition = dirichlet_partition(dataset.labels(), p.clients, p.alpha, p.min_per_client, config.seeds.partition)?;
        let clients = partition.split(p.train_fraction, derive_seed(config.seeds.partition, &[1]))?;
        let spec = MlpSpec::new(dataset.num_features(), config.model.hidden.clone(), dataset.num_classes())
            .with_activation(config.model.activation);
        let mlp = Mlp::new(spec)?;
        let params = mlp.init_params(config.seeds.init);
        let a = &config.aggregator;
        let aggregator = Aggregator::new(
            a.kind,
            ProjectionParams {
                eps: T::lit(a.eps),
                tau: T::lit(a.tau),
                rank_tol: T::lit(a.rank_tol),
            },
            ServerOptParams {
                beta: T::lit(a.beta),
                beta1: T::lit(a.beta1),
                beta2: T::lit(a.beta2),
                tau_adapt: T::lit(a.tau_adapt),
            },
        );
        Ok(Self {
            config: config.clone(),
            dataset,
            clients,
            mlp,
            params,
            aggregator,
            last_update: None,
            round: 0,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn dataset(&self) -> &Dataset<T> {
        &self.dataset
    }

    pub fn clients(&self) -> &[ClientSplit] {
        &self.clients
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn params(&self) -> &ParamVector<T> {
        &self.params
    }

    pub fn aggregator(&self) -> &Aggregator<T> {
        &self.aggregator
    }

    /// `g_t` of the most recent round.
    pub fn last_update(&self) -> Option<&[T]> {
        self.last_update.as_deref()
    }

    /// Index of the next round to run.
    pub fn round(&self) -> usize {
        self.round
    }

    /// Data-size weight of a client (its number of training samples).
    pub fn client_weight(&self, client: usize) -> usize {
        self.clients[client].train.len()
    }

    fn local_steps(&self, client: usize) -> usize {
        let f = &self.config.federation;
        if let Some(k) = f.local_steps {
            return k;
        }
        if f.full_batch {
            return 1;
        }
        self.client_weight(client).div_ceil(f.batch_size)
    }

    pub fn sampled_clients(&self, round: usize) -> Result<Vec<usize>> {
        sample_clients(
            self.clients.len(),
            self.config.federation.clients_per_round,
            round,
            self.config.seeds.sampling,
        )
    }

    /// Train every listed client from the current global model and collect
    /// their deltas in list order.
    pub fn client_updates(&self, round: usize, sampled: &[usize]) -> Result<Vec<ClientUpdate<T>>> {
        let f = &self.config.federation;
        let lr = T::lit(f.local_lr * f.lr_decay.powi(round as i32));
        let batch_size = if f.full_batch { None } else { Some(f.batch_size) };
        let mut updates = sampled
            .par_iter()
            .map(|&client| {
                let objective = MlpObjective {
                    mlp: &self.mlp,
                    dataset: &self.dataset,
                    indices: &self.clients[client].train,
                };
                let opts = LocalTrainOptions {
                    learning_rate: lr,
                    steps: self.local_steps(client),
                    batch_size,
                    seed: derive_seed(self.config.seeds.training, &[round as u64, client as u64]),
                    prox_mu: T::lit(f.prox_mu),
                };
                let trained = local_train(&self.params, &objective, &opts).map_err(|e| e.for_client(client))?;
                let delta = client_delta(&self.params, &trained).map_err(|e| e.for_client(client))?;
                Ok(ClientUpdate::new(client, T::lit(self.client_weight(client) as f64), delta))
            })
            .collect::<Result<Vec<_>>>()?;

        if self.aggregator.kind() == AggregatorKind::FedNova {
            // Rescale each delta from K_i steps to the effective step count.
            let total: f64 = sampled.iter().map(|&c| self.client_weight(c) as f64).sum();
            let tau_eff: f64 = sampled
                .iter()
                .map(|&c| self.client_weight(c) as f64 / total * self.local_steps(c) as f64)
                .sum();
            for u in &mut updates {
                let scale = T::lit(tau_eff / self.local_steps(u.client_id) as f64);
                u.delta.iter_mut().for_each(|x| *x *= scale);
            }
        }
        Ok(updates)
    }

    /// Data-weighted full-batch gradient of the global objective over all
    /// clients' training splits.
    pub fn global_gradient(&self) -> Result<Vec<T>> {
        let total: f64 = (0..self.clients.len()).map(|c| self.client_weight(c) as f64).sum();
        let mut out = vec![T::zero(); self.params.dim()];
        let mut grad = vec![T::zero(); self.params.dim()];
        for (c, split) in self.clients.iter().enumerate() {
            let objective = MlpObjective {
                mlp: &self.mlp,
                dataset: &self.dataset,
                indices: &split.train,
            };
            let all: Vec<usize> = (0..split.train.len()).collect();
            objective.loss_and_grad(self.params.values(), &all, &mut grad)?;
            let w = T::lit(self.client_weight(c) as f64 / total);
            for (o, &g) in out.iter_mut().zip(&grad) {
                *o += w * g;
            }
        }
        Ok(out)
    }

    pub fn evaluate(&self) -> Result<Vec<f64>> {
        evaluate(&self.mlp, &self.params, &self.dataset, &self.clients)
    }

    /// Run the next communication round.
    pub fn run_round(&mut self) -> Result<RoundRecord> {
        let round = self.round;
        self.step(round).map_err(|e| e.in_round(round))
    }

    fn step(&mut self, round: usize) -> Result<RoundRecord> {
        let started = Instant::now();
        let sampled = self.sampled_clients(round)?;
        let updates = self.client_updates(round, &sampled)?;
        let aggregate = self.aggregator.aggregate(&updates, self.params.layout())?;
        let g = aggregate.direction;
        self.params.step(&g, T::lit(self.config.federation.server_lr));

        let conflicts = count_conflicts(&updates, &g);
        let (active_conflicts, residual_norm, gram_ranks, full_rank) = match &aggregate.projection {
            Some(diag) => {
                let active: Vec<ClientUpdate<T>> = diag
                    .always_active(updates.len())
                    .into_iter()
                    .map(|i| updates[i].clone())
                    .collect();
                (
                    count_conflicts(&active, &g),
                    diag.residual_norm().to_f64_lossy(),
                    diag.gram_ranks(),
                    diag.full_rank(),
                )
            }
            None => (conflicts, 0.0, Vec::new(), true),
        };
        self.last_update = Some(g);
        self.round += 1;

        let f = &self.config.federation;
        let evaluate_now = (round + 1).is_multiple_of(f.eval_every) || round + 1 == f.rounds;
        let (accuracies, summary) = if evaluate_now {
            let accs = self.evaluate()?;
            let summary = summarize(&accs)?;
            (Some(accs), Some(summary))
        } else {
            (None, None)
        };
        Ok(RoundRecord {
            round,
            sampled,
            accuracies,
            summary,
            conflicts,
            active_conflicts,
            residual_norm,
            gram_ranks,
            full_rank,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        })
    }
}

/// Run all configured rounds in double precision.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RoundRecord>> {
    let mut sim = Simulation::<f64>::new(config)?;
    run_simulation(&mut sim)
}

/// Run the remaining configured rounds of an existing simulation.
pub fn run_simulation<T: Scalar>(sim: &mut Simulation<T>) -> Result<Vec<RoundRecord>> {
    let rounds = sim.config().federation.rounds;
    let mut records = Vec::with_capacity(rounds);
    while sim.round() < rounds {
        records.push(sim.run_round()?);
    }
    Ok(records)
}
