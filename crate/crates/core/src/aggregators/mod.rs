//! Round-level aggregation strategies sharing one interface: every strategy
//! consumes the same list of [`ClientUpdate`]s and returns a `d`-vector.

mod craft;
mod server_opt;

pub use craft::{
    active_set, config_aggregate, craft_aggregate, ActiveSet, CraftDiagnostics, LayerDiagnostics,
    ProjectionParams, DEFAULT_TAU,
};
pub use server_opt::{adaptive_server_step, server_momentum_step, AdaptiveVariant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::LayerLayout;
use crate::projection::AlignmentTarget;
use crate::scalar::{all_finite, dot, Scalar};

/// Accumulated local update `theta_t - theta_final` of one client.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate<T> {
    pub client_id: usize,
    /// Data-size weight, strictly positive.
    pub weight: T,
    pub delta: Vec<T>,
}

impl<T: Scalar> ClientUpdate<T> {
    pub fn new(client_id: usize, weight: T, delta: Vec<T>) -> Self {
        Self {
            client_id,
            weight,
            delta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AggregatorKind {
    #[serde(rename = "fedavg")]
    FedAvg,
    /// Weighted averaging at the server; the proximal term lives client-side.
    #[serde(rename = "fedprox")]
    FedProx,
    /// Weighted averaging of step-normalized deltas; normalization is applied
    /// by the simulator before aggregation.
    #[serde(rename = "fednova")]
    FedNova,
    #[serde(rename = "fedavgm")]
    FedAvgM,
    #[serde(rename = "fedadagrad")]
    FedAdagrad,
    #[serde(rename = "fedadam")]
    FedAdam,
    #[serde(rename = "fedyogi")]
    FedYogi,
    /// Layer-wise minimum-norm conflict-free direction (zero reference).
    #[serde(rename = "config")]
    ConFig,
    #[serde(rename = "craft")]
    Craft,
}

impl AggregatorKind {
    pub const ALL: [AggregatorKind; 9] = [
        AggregatorKind::FedAvg,
        AggregatorKind::FedProx,
        AggregatorKind::FedNova,
        AggregatorKind::FedAvgM,
        AggregatorKind::FedAdagrad,
        AggregatorKind::FedAdam,
        AggregatorKind::FedYogi,
        AggregatorKind::ConFig,
        AggregatorKind::Craft,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggregatorKind::FedAvg => "fedavg",
            AggregatorKind::FedProx => "fedprox",
            AggregatorKind::FedNova => "fednova",
            AggregatorKind::FedAvgM => "fedavgm",
            AggregatorKind::FedAdagrad => "fedadagrad",
            AggregatorKind::FedAdam => "fedadam",
            AggregatorKind::FedYogi => "fedyogi",
            AggregatorKind::ConFig => "config",
            AggregatorKind::Craft => "craft",
        }
    }

    fn adaptive_variant(self) -> Option<AdaptiveVariant> {
        match self {
            AggregatorKind::FedAdagrad => Some(AdaptiveVariant::Adagrad),
            AggregatorKind::FedAdam => Some(AdaptiveVariant::Adam),
            AggregatorKind::FedYogi => Some(AdaptiveVariant::Yogi),
            _ => None,
        }
    }
}

impl std::fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Persistent server state carried between rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatorState<T> {
    pub kind: AggregatorKind,
    /// Previous global update; the CRAFT reference source.
    pub prev_update: Option<Vec<T>>,
    pub momentum: Option<Vec<T>>,
    pub second_moment: Option<Vec<T>>,
    pub round: usize,
}

impl<T> AggregatorState<T> {
    pub fn new(kind: AggregatorKind) -> Self {
        Self {
            kind,
            prev_update: None,
            momentum: None,
            second_moment: None,
            round: 0,
        }
    }
}

/// Server optimizer hyperparameters for the momentum/adaptive baselines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerOptParams<T> {
    pub beta: T,
    pub beta1: T,
    pub beta2: T,
    pub tau_adapt: T,
}

impl<T: Scalar> Default for ServerOptParams<T> {
    fn default() -> Self {
        Self {
            beta: T::lit(0.9),
            beta1: T::lit(0.9),
            beta2: T::lit(0.99),
            tau_adapt: T::lit(1e-3),
        }
    }
}

/// Data-proportional targets `w_i / sum_j w_j` over the given updates.
pub fn build_targets<T: Scalar>(updates: &[ClientUpdate<T>]) -> Result<AlignmentTarget<T>> {
    if updates.is_empty() {
        return Err(Error::invalid("no client updates to aggregate"));
    }
    if let Some(u) = updates.iter().find(|u| !(u.weight.is_finite() && u.weight > T::zero())) {
        return Err(Error::invalid("client weight must be positive").for_client(u.client_id));
    }
    let weights: Vec<T> = updates.iter().map(|u| u.weight).collect();
    AlignmentTarget::from_weights(&weights)
}

/// `sum_i weights[i] * slices[i]`, accumulated in list order.
pub(crate) fn weighted_sum<T: Scalar>(slices: &[&[T]], weights: &[T]) -> Vec<T> {
    let len = slices.first().map_or(0, |s| s.len());
    let mut out = vec![T::zero(); len];
    for (slice, &w) in slices.iter().zip(weights) {
        for (o, &x) in out.iter_mut().zip(slice.iter()) {
            *o += w * x;
        }
    }
    out
}

pub(crate) fn validate_updates<T: Scalar>(updates: &[ClientUpdate<T>], dim: usize) -> Result<()> {
    if updates.is_empty() {
        return Err(Error::invalid("no client updates to aggregate"));
    }
    for u in updates {
        if u.delta.len() != dim {
            return Err(Error::mismatch("client delta", dim, u.delta.len()).for_client(u.client_id));
        }
        if !all_finite(&u.delta) {
            return Err(Error::invalid("client delta has non-finite components").for_client(u.client_id));
        }
    }
    Ok(())
}

/// Data-weighted average of the client deltas.
pub fn fedavg_aggregate<T: Scalar>(updates: &[ClientUpdate<T>]) -> Result<Vec<T>> {
    let rho = build_targets(updates)?;
    validate_updates(updates, updates[0].delta.len())?;
    let slices: Vec<&[T]> = updates.iter().map(|u| u.delta.as_slice()).collect();
    Ok(weighted_sum(&slices, rho.values()))
}

/// Number of clients with `<g_i, g> < 0`.
pub fn count_conflicts<T: Scalar>(updates: &[ClientUpdate<T>], g: &[T]) -> usize {
    updates
        .iter()
        .filter(|u| {
            assert_eq!(u.delta.len(), g.len(), "update and aggregate dimensions differ");
            dot(&u.delta, g) < T::zero()
        })
        .count()
}

/// Result of one aggregation call.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate<T> {
    pub direction: Vec<T>,
    /// Present for the projection-based aggregators.
    pub projection: Option<CraftDiagnostics<T>>,
}

/// An aggregation strategy together with its persistent server state.
#[derive(Debug, Clone)]
pub struct Aggregator<T> {
    state: AggregatorState<T>,
    projection: ProjectionParams<T>,
    server: ServerOptParams<T>,
}

impl<T: Scalar> Aggregator<T> {
    pub fn new(kind: AggregatorKind, projection: ProjectionParams<T>, server: ServerOptParams<T>) -> Self {
        Self {
            state: AggregatorState::new(kind),
            projection,
            server,
        }
    }

    pub fn kind(&self) -> AggregatorKind {
        self.state.kind
    }

    pub fn state(&self) -> &AggregatorState<T> {
        &self.state
    }

    /// Aggregate one round of updates and advance the server state.
    pub fn aggregate(&mut self, updates: &[ClientUpdate<T>], layout: &LayerLayout) -> Result<Aggregate<T>> {
        validate_updates(updates, layout.dim())?;
        let kind = self.state.kind;
        let out = match kind {
            AggregatorKind::FedAvg | AggregatorKind::FedProx | AggregatorKind::FedNova => Aggregate {
                direction: fedavg_aggregate(updates)?,
                projection: None,
            },
            AggregatorKind::FedAvgM => {
                let avg = fedavg_aggregate(updates)?;
                Aggregate {
                    direction: server_momentum_step(&mut self.state, &avg, self.server.beta),
                    projection: None,
                }
            }
            AggregatorKind::FedAdagrad | AggregatorKind::FedAdam | AggregatorKind::FedYogi => {
                let avg = fedavg_aggregate(updates)?;
                let variant = kind.adaptive_variant().expect("adaptive kind");
                let s = self.server;
                Aggregate {
                    direction: adaptive_server_step(&mut self.state, &avg, variant, s.beta1, s.beta2, s.tau_adapt),
                    projection: None,
                }
            }
            AggregatorKind::ConFig => {
                let (direction, diag) = config_aggregate(updates, layout, &self.projection)?;
                Aggregate {
                    direction,
                    projection: Some(diag),
                }
            }
            AggregatorKind::Craft => {
                let (direction, diag) = craft_aggregate(updates, &self.state, layout, &self.projection)?;
                self.state.prev_update = Some(direction.clone());
                Aggregate {
                    direction,
                    projection: Some(diag),
                }
            }
        };
        self.state.round += 1;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn upd(id: usize, w: f64, d: &[f64]) -> ClientUpdate<f64> {
        ClientUpdate::new(id, w, d.to_vec())
    }

    #[test]
    fn targets_are_proportions() {
        let t = build_targets(&[upd(0, 10.0, &[1.0]), upd(1, 30.0, &[1.0])]).unwrap();
        assert_eq!(t.values(), &[0.25, 0.75]);
        let t = build_targets(&(0..4).map(|i| upd(i, 7.0, &[1.0])).collect::<Vec<_>>()).unwrap();
        assert_eq!(t.values(), &[0.25; 4]);
        let t = build_targets(&[upd(0, 20.0, &[1.0]), upd(1, 20.0, &[1.0]), upd(2, 60.0, &[1.0])]).unwrap();
        for (a, b) in t.values().iter().zip([0.2, 0.2, 0.6]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((t.values().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn targets_reject_empty_and_nonpositive() {
        assert!(build_targets::<f64>(&[]).is_err());
        let err = build_targets(&[upd(3, 0.0, &[1.0])]).unwrap_err();
        assert!(matches!(err, Error::Client { client: 3, .. }));
    }

    #[test]
    fn fedavg_examples() {
        let g = fedavg_aggregate(&[upd(0, 1.0, &[1.0, 0.0]), upd(1, 1.0, &[0.0, 1.0])]).unwrap();
        assert_eq!(g, vec![0.5, 0.5]);
        assert_eq!(fedavg_aggregate(&[upd(0, 5.0, &[3.0, -1.0])]).unwrap(), vec![3.0, -1.0]);
        let g = fedavg_aggregate(&[upd(0, 1.0, &[4.0, 0.0]), upd(1, 3.0, &[0.0, 4.0])]).unwrap();
        assert_eq!(g, vec![1.0, 3.0]);
        assert!(fedavg_aggregate::<f64>(&[]).is_err());
    }

    #[test]
    fn conflict_counting() {
        let ups = [upd(0, 1.0, &[1.0, 0.0]), upd(1, 1.0, &[0.5, 0.5])];
        assert_eq!(count_conflicts(&ups, &[1.0, 0.2]), 0);
        assert_eq!(count_conflicts(&ups[..1], &[-1.0, 0.0]), 1);
        assert_eq!(count_conflicts(&ups, &[-1.0, 1.5]), 1);
        assert_eq!(count_conflicts(&ups, &[-1.0, 0.9]), 2);
    }

    #[test]
    fn aggregator_rejects_bad_deltas_naming_client() {
        let layout = LayerLayout::single(2).unwrap();
        let mut agg = Aggregator::new(AggregatorKind::Craft, ProjectionParams::default(), ServerOptParams::default());
        let err = agg
            .aggregate(&[upd(0, 1.0, &[1.0, 0.0]), upd(7, 1.0, &[1.0])], &layout)
            .unwrap_err();
        assert!(matches!(err, Error::Client { client: 7, .. }));
        let err = agg
            .aggregate(&[upd(4, 1.0, &[f64::NAN, 0.0])], &layout)
            .unwrap_err();
        assert!(matches!(err, Error::Client { client: 4, .. }));
        assert_eq!(agg.state().round, 0);
    }

    #[test]
    fn every_kind_returns_a_d_vector() {
        let layout = LayerLayout::from_lengths(&[2, 1]).unwrap();
        let ups = [upd(0, 1.0, &[1.0, 0.2, -0.1]), upd(1, 2.0, &[0.1, 1.0, 0.3])];
        for kind in AggregatorKind::ALL {
            let mut agg = Aggregator::new(kind, ProjectionParams::default(), ServerOptParams::default());
            for round in 0..3 {
                let out = agg.aggregate(&ups, &layout).unwrap();
                assert_eq!(out.direction.len(), 3, "{kind}");
                assert_eq!(out.projection.is_some(), matches!(kind, AggregatorKind::ConFig | AggregatorKind::Craft));
                assert_eq!(agg.state().round, round + 1);
                assert_eq!(
                    agg.state().prev_update.is_some(),
                    kind == AggregatorKind::Craft,
                    "prev_update present iff CRAFT after a round"
                );
            }
        }
    }

    #[test]
    fn craft_state_tracks_last_update() {
        let layout = LayerLayout::single(3).unwrap();
        let mut agg = Aggregator::new(AggregatorKind::Craft, ProjectionParams::default(), ServerOptParams::default());
        let ups = [upd(0, 1.0, &[1.0, 0.0, 0.5]), upd(1, 1.0, &[0.0, 1.0, 0.5])];
        for _ in 0..3 {
            let out = agg.aggregate(&ups, &layout).unwrap();
            assert_eq!(agg.state().prev_update.as_ref(), Some(&out.direction));
        }
    }
}
