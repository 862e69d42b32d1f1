//! Layer-wise conflict-resolved aggregation with a magnitude-gated active set.

use rayon::prelude::*;

use super::{build_targets, validate_updates, weighted_sum, AggregatorState, ClientUpdate};
use crate::error::Result;
use crate::layout::LayerLayout;
use crate::projection::{craft_correct, normalize, AlignmentMatrix, AlignmentTarget, DEFAULT_EPS, DEFAULT_RANK_TOL};
use crate::scalar::{norm, Scalar};

/// Default per-layer activity threshold on client update norms.
pub const DEFAULT_TAU: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionParams<T> {
    /// Stabilizer of the normalization `v / (||v|| + eps)`.
    pub eps: T,
    /// Per-layer activity threshold.
    pub tau: T,
    /// Relative Gram eigenvalue cutoff.
    pub rank_tol: T,
}

impl<T: Scalar> Default for ProjectionParams<T> {
    fn default() -> Self {
        Self {
            eps: T::lit(DEFAULT_EPS),
            tau: T::lit(DEFAULT_TAU),
            rank_tol: T::lit(DEFAULT_RANK_TOL),
        }
    }
}

/// Clients whose layer slice is large enough to define a constraint row.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSet<T> {
    /// Positions into the round's update list, ascending.
    pub indices: Vec<usize>,
    /// Targets renormalized over `indices`, in the same order.
    pub targets: Vec<T>,
}

impl<T> ActiveSet<T> {
    /// An empty set signals the weighted-average fallback.
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Keep clients with `norms[i] >= tau` and renormalize their base targets.
pub fn active_set<T: Scalar>(norms: &[T], tau: T, rho: &[T]) -> ActiveSet<T> {
    debug_assert_eq!(norms.len(), rho.len());
    let indices: Vec<usize> = (0..norms.len()).filter(|&i| norms[i] >= tau).collect();
    let total: T = indices.iter().map(|&i| rho[i]).sum();
    let targets = indices.iter().map(|&i| rho[i] / total).collect();
    ActiveSet { indices, targets }
}

/// Per-layer outcome of the projection.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDiagnostics<T> {
    pub active: Vec<usize>,
    /// `None` when the layer fell back to weighted averaging.
    pub gram_rank: Option<usize>,
    pub residual_norm: T,
}

impl<T> LayerDiagnostics<T> {
    pub fn is_fallback(&self) -> bool {
        self.gram_rank.is_none()
    }

    pub fn is_full_rank(&self) -> bool {
        self.gram_rank.is_none_or(|r| r == self.active.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CraftDiagnostics<T> {
    pub layers: Vec<LayerDiagnostics<T>>,
}

impl<T: Scalar> CraftDiagnostics<T> {
    /// Euclidean norm of the stacked per-layer residuals.
    pub fn residual_norm(&self) -> T {
        self.layers
            .iter()
            .map(|l| l.residual_norm * l.residual_norm)
            .sum::<T>()
            .sqrt()
    }

    /// Every projected layer solved a full-rank Gram system.
    pub fn full_rank(&self) -> bool {
        self.layers.iter().all(LayerDiagnostics::is_full_rank)
    }

    /// Gram rank per layer, zero for fallback layers.
    pub fn gram_ranks(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.gram_rank.unwrap_or(0)).collect()
    }

    /// Update positions that were active in every layer.
    pub fn always_active(&self, num_updates: usize) -> Vec<usize> {
        (0..num_updates)
            .filter(|i| self.layers.iter().all(|l| l.active.binary_search(i).is_ok()))
            .collect()
    }
}

/// Layer-wise CRAFT aggregation.
///
/// For each layer the reference is the normalized slice of
/// `state.prev_update` (zero at round 0 or when absent), rows are the
/// normalized slices of active clients, and the layer update is the closest
/// point to the reference on `{g : U g = rho_active}`. Layers without active
/// clients use the weighted average of their slices. The caller is
/// responsible for storing the returned update in `state.prev_update`.
pub fn craft_aggregate<T: Scalar>(
    updates: &[ClientUpdate<T>],
    state: &AggregatorState<T>,
    layout: &LayerLayout,
    params: &ProjectionParams<T>,
) -> Result<(Vec<T>, CraftDiagnostics<T>)> {
    let reference = if state.round == 0 {
        None
    } else {
        state.prev_update.as_deref()
    };
    project_layers(updates, reference, layout, params)
}

/// Layer-wise minimum-norm conflict-free aggregation (zero reference).
pub fn config_aggregate<T: Scalar>(
    updates: &[ClientUpdate<T>],
    layout: &LayerLayout,
    params: &ProjectionParams<T>,
) -> Result<(Vec<T>, CraftDiagnostics<T>)> {
    project_layers(updates, None, layout, params)
}

fn project_layers<T: Scalar>(
    updates: &[ClientUpdate<T>],
    reference: Option<&[T]>,
    layout: &LayerLayout,
    params: &ProjectionParams<T>,
) -> Result<(Vec<T>, CraftDiagnostics<T>)> {
    validate_updates(updates, layout.dim())?;
    if let Some(r) = reference {
        if r.len() != layout.dim() {
            return Err(crate::error::Error::mismatch("previous update", layout.dim(), r.len()));
        }
    }
    let rho = build_targets(updates)?;
    let solved = (0..layout.num_layers())
        .into_par_iter()
        .map(|q| project_layer(updates, reference, layout, q, rho.values(), params))
        .collect::<Result<Vec<_>>>()?;

    let mut direction = Vec::with_capacity(layout.dim());
    let mut layers = Vec::with_capacity(solved.len());
    for (g, diag) in solved {
        direction.extend(g);
        layers.push(diag);
    }
    Ok((direction, CraftDiagnostics { layers }))
}

fn project_layer<T: Scalar>(
    updates: &[ClientUpdate<T>],
    reference: Option<&[T]>,
    layout: &LayerLayout,
    q: usize,
    rho: &[T],
    params: &ProjectionParams<T>,
) -> Result<(Vec<T>, LayerDiagnostics<T>)> {
    let slices: Vec<&[T]> = updates.iter().map(|u| layout.slice(&u.delta, q)).collect();
    let norms: Vec<T> = slices.iter().map(|s| norm(s)).collect();
    let active = active_set(&norms, params.tau, rho);
    if active.is_empty() {
        return Ok((
            weighted_sum(&slices, rho),
            LayerDiagnostics {
                active: Vec::new(),
                gram_rank: None,
                residual_norm: T::zero(),
            },
        ));
    }

    let rows: Vec<&[T]> = active.indices.iter().map(|&i| slices[i]).collect();
    let u = AlignmentMatrix::from_updates(&rows, params.eps)?;
    let targets = AlignmentTarget::new(active.targets)?;
    let reference = match reference {
        Some(prev) => normalize(layout.slice(prev, q), params.eps)?,
        None => vec![T::zero(); layout.spans()[q].len],
    };
    let result = craft_correct(&u, &targets, &reference, params.rank_tol)?;
    let residual_norm = result.residual_norm();
    Ok((
        result.direction,
        LayerDiagnostics {
            active: active.indices,
            gram_rank: Some(result.gram_rank),
            residual_norm,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregators::{count_conflicts, fedavg_aggregate, AggregatorKind};
    use crate::projection::config_direction;

    fn upd(id: usize, w: f64, d: &[f64]) -> ClientUpdate<f64> {
        ClientUpdate::new(id, w, d.to_vec())
    }

    fn state_with_prev(prev: Vec<f64>) -> AggregatorState<f64> {
        let mut s = AggregatorState::new(AggregatorKind::Craft);
        s.prev_update = Some(prev);
        s.round = 1;
        s
    }

    #[test]
    fn active_set_gates_small_norms() {
        let a = active_set::<f64>(&[1.0, 1e-9, 0.5], 1e-6, &[0.2, 0.3, 0.5]);
        assert_eq!(a.indices, vec![0, 2]);
        assert!((a.targets[0] - 0.2 / 0.7).abs() < 1e-15);
        assert!((a.targets[1] - 0.5 / 0.7).abs() < 1e-15);

        let a = active_set(&[1.0, 2.0], 1e-6, &[0.4, 0.6]);
        assert_eq!(a.indices, vec![0, 1]);
        assert_eq!(a.targets, vec![0.4, 0.6]);

        let a = active_set(&[1e-9, 1e-8], 1e-6, &[0.4, 0.6]);
        assert!(a.is_empty());
    }

    #[test]
    fn round_zero_matches_layerwise_config() {
        let layout = LayerLayout::from_lengths(&[3, 2]).unwrap();
        let ups = [
            upd(0, 2.0, &[1.0, -0.5, 0.2, 0.3, 0.1]),
            upd(1, 1.0, &[-0.2, 0.8, 0.1, -0.4, 0.6]),
        ];
        let mut state = AggregatorState::new(AggregatorKind::Craft);
        state.prev_update = Some(vec![9.0; 5]);
        let (g, _) = craft_aggregate(&ups, &state, &layout, &ProjectionParams::default()).unwrap();

        let rho = AlignmentTarget::new(vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
        let mut expected = Vec::new();
        for q in 0..2 {
            let rows: Vec<&[f64]> = ups.iter().map(|u| layout.slice(&u.delta, q)).collect();
            let u = AlignmentMatrix::from_updates(&rows, 1e-8).unwrap();
            expected.extend(config_direction(&u, &rho, 1e-10).unwrap().direction);
        }
        assert_eq!(g, expected);
    }

    #[test]
    fn single_layer_orthonormal_with_reference() {
        let layout = LayerLayout::single(3).unwrap();
        // Huge norms make the eps-shrinkage negligible.
        let ups = [upd(0, 1.0, &[1e9, 0.0, 0.0]), upd(1, 1.0, &[0.0, 1e9, 0.0])];
        let state = state_with_prev(vec![0.0, 0.0, 1e9]);
        let (g, diag) = craft_aggregate(&ups, &state, &layout, &ProjectionParams::default()).unwrap();
        for (a, b) in g.iter().zip([0.5, 0.5, 1.0]) {
            assert!((a - b).abs() < 1e-12, "{g:?}");
        }
        assert!(diag.full_rank());
        assert_eq!(diag.gram_ranks(), vec![2]);
    }

    #[test]
    fn layers_are_solved_independently() {
        let layout = LayerLayout::from_lengths(&[3, 3]).unwrap();
        let ups = [
            upd(0, 1.0, &[1.0, 0.2, -0.3, 0.5, 0.5, 0.1]),
            upd(1, 3.0, &[-0.4, 1.0, 0.2, -0.2, 0.9, 0.3]),
        ];
        let prev = vec![0.3, -0.1, 0.7, 1.0, 0.0, -0.5];
        let state = state_with_prev(prev.clone());
        let (g, _) = craft_aggregate(&ups, &state, &layout, &ProjectionParams::default()).unwrap();

        let rho = AlignmentTarget::new(vec![0.25, 0.75]).unwrap();
        let mut oracle = Vec::new();
        for q in 0..2 {
            let rows: Vec<Vec<f64>> = ups.iter().map(|u| layout.slice(&u.delta, q).to_vec()).collect();
            let u = AlignmentMatrix::from_updates(&rows, 1e-8).unwrap();
            let reference = normalize(layout.slice(&prev, q), 1e-8).unwrap();
            oracle.extend(craft_correct(&u, &rho, &reference, 1e-10).unwrap().direction);
        }
        assert_eq!(g, oracle);
    }

    #[test]
    fn fallback_layer_uses_weighted_average() {
        let layout = LayerLayout::from_lengths(&[2, 2]).unwrap();
        let ups = [
            upd(0, 1.0, &[1.0, 0.0, 1e-9, 0.0]),
            upd(1, 3.0, &[0.0, 1.0, 0.0, -1e-9]),
        ];
        let (g, diag) = craft_aggregate(
            &ups,
            &AggregatorState::new(AggregatorKind::Craft),
            &layout,
            &ProjectionParams::default(),
        )
        .unwrap();
        assert!(diag.layers[1].is_fallback());
        assert_eq!(&g[2..], &[0.25 * 1e-9, 0.75 * -1e-9]);
        assert_eq!(diag.always_active(2), Vec::<usize>::new());
    }

    #[test]
    fn tau_above_all_norms_recovers_fedavg_exactly() {
        let layout = LayerLayout::from_lengths(&[2, 3]).unwrap();
        let ups = [
            upd(0, 1.0, &[0.1, -0.3, 0.7, 0.2, 0.05]),
            upd(1, 2.5, &[-0.6, 0.4, 0.1, 0.9, -0.2]),
            upd(2, 0.5, &[0.3, 0.3, -0.8, 0.0, 0.4]),
        ];
        let params = ProjectionParams {
            tau: 1e6,
            ..ProjectionParams::default()
        };
        let state = state_with_prev(vec![1.0; 5]);
        let (g, diag) = craft_aggregate(&ups, &state, &layout, &params).unwrap();
        assert_eq!(g, fedavg_aggregate(&ups).unwrap());
        assert!(diag.layers.iter().all(LayerDiagnostics::is_fallback));
    }

    #[test]
    fn zero_previous_slice_degrades_to_zero_reference() {
        // Second layer has a one-dimensional null space, so its reference matters.
        let layout = LayerLayout::from_lengths(&[2, 3]).unwrap();
        let ups = [
            upd(0, 1.0, &[1.0, 0.5, 0.3, -1.0, 0.2]),
            upd(1, 1.0, &[-0.5, 1.0, 0.8, 0.1, -0.4]),
        ];
        let params = ProjectionParams::default();
        let prev = vec![0.0, 0.0, 0.4, 0.4, 0.9];
        let (with_zero, _) = craft_aggregate(&ups, &state_with_prev(prev), &layout, &params).unwrap();
        let (config, _) = config_aggregate(&ups, &layout, &params).unwrap();
        assert_eq!(&with_zero[..2], &config[..2]);
        assert_ne!(&with_zero[2..], &config[2..]);
    }

    #[test]
    fn output_has_no_conflicts_with_active_clients() {
        let layout = LayerLayout::from_lengths(&[4, 4]).unwrap();
        let ups = [
            upd(0, 1.0, &[1.0, 0.1, 0.0, -0.2, 0.5, 0.5, 0.0, 0.1]),
            upd(1, 1.0, &[-0.9, 0.3, 0.1, 0.0, -0.6, 0.4, 0.2, 0.0]),
            upd(2, 2.0, &[0.0, -1.0, 0.5, 0.1, 0.1, -0.7, 0.3, 0.2]),
        ];
        let state = state_with_prev(vec![-1.0, -1.0, -1.0, -1.0, 1.0, -2.0, 0.0, 0.5]);
        let (g, diag) = craft_aggregate(&ups, &state, &layout, &ProjectionParams::default()).unwrap();
        assert!(diag.full_rank());
        assert_eq!(diag.always_active(3), vec![0, 1, 2]);
        assert_eq!(count_conflicts(&ups, &g), 0);
        assert!(diag.residual_norm() < 1e-12);
    }
}
