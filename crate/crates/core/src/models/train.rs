//! Client-side local optimization.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Mlp, ParamVector};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A differentiable loss over an indexed sample set.
pub trait Objective<T: Scalar>: Sync {
    fn num_samples(&self) -> usize;

    /// Mean loss over `batch` (sample positions in `0..num_samples()`);
    /// overwrites `grad` with its gradient.
    fn loss_and_grad(&self, params: &[T], batch: &[usize], grad: &mut [T]) -> Result<T>;
}

/// Cross-entropy of an [`Mlp`] on a subset of a dataset.
pub struct MlpObjective<'a, T> {
    pub mlp: &'a Mlp,
    pub dataset: &'a Dataset<T>,
    /// Rows of `dataset` that form this objective's samples.
    pub indices: &'a [usize],
}

impl<T: Scalar> Objective<T> for MlpObjective<'_, T> {
    fn num_samples(&self) -> usize {
        self.indices.len()
    }

    fn loss_and_grad(&self, params: &[T], batch: &[usize], grad: &mut [T]) -> Result<T> {
        let rows: Vec<usize> = batch.iter().map(|&b| self.indices[b]).collect();
        let (x, y) = self.dataset.gather(&rows);
        self.mlp.loss_and_grad_into(params, x.view(), &y, grad)
    }
}

/// `inner + (mu / 2) ||theta - anchor||^2`.
pub struct ProximalObjective<'a, T, O> {
    pub inner: &'a O,
    pub anchor: &'a [T],
    pub mu: T,
}

impl<T: Scalar, O: Objective<T>> Objective<T> for ProximalObjective<'_, T, O> {
    fn num_samples(&self) -> usize {
        self.inner.num_samples()
    }

    fn loss_and_grad(&self, params: &[T], batch: &[usize], grad: &mut [T]) -> Result<T> {
        let mut loss = self.inner.loss_and_grad(params, batch, grad)?;
        let half = T::lit(0.5);
        for ((g, &p), &a) in grad.iter_mut().zip(params).zip(self.anchor) {
            let diff = p - a;
            *g += self.mu * diff;
            loss += half * self.mu * diff * diff;
        }
        Ok(loss)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalTrainOptions<T> {
    pub learning_rate: T,
    pub steps: usize,
    /// `None` uses every sample in every step.
    pub batch_size: Option<usize>,
    pub seed: u64,
    /// Proximal coefficient; zero disables the term.
    pub prox_mu: T,
}

/// Run `steps` SGD steps from `params` on mini-batches drawn by seeded
/// reshuffling (a fresh permutation whenever the previous one is used up).
pub fn local_train<T: Scalar, O: Objective<T>>(
    params: &ParamVector<T>,
    objective: &O,
    opts: &LocalTrainOptions<T>,
) -> Result<ParamVector<T>> {
    let n = objective.num_samples();
    if n == 0 {
        return Err(Error::invalid("local dataset is empty"));
    }
    if opts.steps == 0 {
        return Err(Error::invalid("local training needs at least one step"));
    }
    if !(opts.learning_rate >= T::zero()) {
        return Err(Error::invalid("local learning rate must be non-negative"));
    }
    if opts.prox_mu > T::zero() {
        let prox = ProximalObjective {
            inner: objective,
            anchor: params.values(),
            mu: opts.prox_mu,
        };
        return sgd(params, &prox, opts, n);
    }
    sgd(params, objective, opts, n)
}

fn sgd<T: Scalar, O: Objective<T>>(
    start: &ParamVector<T>,
    objective: &O,
    opts: &LocalTrainOptions<T>,
    n: usize,
) -> Result<ParamVector<T>> {
    let mut params = start.clone();
    let mut grad = vec![T::zero(); params.dim()];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    for _ in 0..opts.steps {
        let batch: &[usize] = match opts.batch_size {
            None => &order,
            Some(b) => {
                if cursor >= n {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                let end = (cursor + b.max(1)).min(n);
                let range = cursor..end;
                cursor = end;
                &order[range]
            }
        };
        objective.loss_and_grad(params.values(), batch, &mut grad)?;
        params.step(&grad, opts.learning_rate);
    }
    Ok(params)
}

/// Accumulated update `theta_t - theta_final`.
pub fn client_delta<T: Scalar>(start: &ParamVector<T>, finish: &ParamVector<T>) -> Result<Vec<T>> {
    if start.layout() != finish.layout() {
        return Err(Error::invalid("client delta between parameter vectors of different layouts"));
    }
    Ok(start
        .values()
        .iter()
        .zip(finish.values())
        .map(|(&a, &b)| a - b)
        .collect())
}
