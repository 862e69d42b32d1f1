//! Server-side optimizers applied to the weighted-average update.

use serde::{Deserialize, Serialize};

use super::AggregatorState;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdaptiveVariant {
    Adagrad,
    Adam,
    Yogi,
}

/// Heavy-ball server momentum: `v <- beta * v + avg`, returned as the update.
pub fn server_momentum_step<T: Scalar>(state: &mut AggregatorState<T>, avg: &[T], beta: T) -> Vec<T> {
    let v = state.momentum.get_or_insert_with(|| vec![T::zero(); avg.len()]);
    for (vi, &a) in v.iter_mut().zip(avg) {
        *vi = beta * *vi + a;
    }
    v.clone()
}

/// FedAdagrad / FedAdam / FedYogi server step.
///
/// First moment `m <- beta1 m + (1 - beta1) avg` for all variants; second
/// moment per variant; output `m / (sqrt(v) + tau)`. Both buffers start at
/// zero.
pub fn adaptive_server_step<T: Scalar>(
    state: &mut AggregatorState<T>,
    avg: &[T],
    variant: AdaptiveVariant,
    beta1: T,
    beta2: T,
    tau: T,
) -> Vec<T> {
    let d = avg.len();
    let one = T::one();
    let m = state.momentum.get_or_insert_with(|| vec![T::zero(); d]);
    for (mi, &a) in m.iter_mut().zip(avg) {
        *mi = beta1 * *mi + (one - beta1) * a;
    }
    let v = state.second_moment.get_or_insert_with(|| vec![T::zero(); d]);
    for (vi, &a) in v.iter_mut().zip(avg) {
        let sq = a * a;
        *vi = match variant {
            AdaptiveVariant::Adagrad => *vi + sq,
            AdaptiveVariant::Adam => beta2 * *vi + (one - beta2) * sq,
            AdaptiveVariant::Yogi => {
                let diff = *vi - sq;
                let sign = if diff > T::zero() {
                    one
                } else if diff < T::zero() {
                    -one
                } else {
                    T::zero()
                };
                *vi - (one - beta2) * sq * sign
            }
        };
    }
    let m = state.momentum.as_ref().expect("first moment initialized above");
    let v = state.second_moment.as_ref().expect("second moment initialized above");
    m.iter().zip(v).map(|(&mi, &vi)| mi / (vi.sqrt() + tau)).collect()
}
