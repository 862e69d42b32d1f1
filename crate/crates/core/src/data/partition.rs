use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};

/// Disjoint per-client index lists into a parent dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub assignments: Vec<Vec<usize>>,
}

/// One client's local data, split into train and test rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Partition {
    pub fn num_clients(&self) -> usize {
        self.assignments.len()
    }

    /// Split every client with [`local_split`], seeding client `i` with
    /// `seed + i`.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<Vec<ClientSplit>> {
        self.assignments
            .iter()
            .enumerate()
            .map(|(i, idx)| {
                local_split(idx, train_fraction, seed.wrapping_add(i as u64))
                    .map(|(train, test)| ClientSplit { train, test })
                    .map_err(|e| e.for_client(i))
            })
            .collect()
    }
}

/// Sample from a symmetric Dirichlet in log space, so tiny concentrations do
/// not underflow every gamma draw to zero.
fn sample_dirichlet(rng: &mut ChaCha8Rng, k: usize, alpha: f64) -> Vec<f64> {
    // G(alpha) ~ G(alpha + 1) * U^(1/alpha)
    let gamma = Gamma::new(alpha + 1.0, 1.0).expect("positive shape");
    let logs: Vec<f64> = (0..k)
        .map(|_| {
            let g: f64 = gamma.sample(rng);
            let u: f64 = 1.0 - rng.random::<f64>();
            g.ln() + u.ln() / alpha
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Label-skewed partition: each class is spread over clients with
/// Dirichlet(`alpha`) proportions; clients left under `min_per_client` are
/// then topped up one sample at a time from the currently largest client,
/// taking from that client's most frequent class.
pub fn dirichlet_partition(
    labels: &[usize],
    num_clients: usize,
    alpha: f64,
    min_per_client: usize,
    seed: u64,
) -> Result<Partition> {
    if num_clients == 0 {
        return Err(Error::config("partition.clients", "need at least one client"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::config("partition.alpha", "concentration must be positive and finite"));
    }
    if num_clients * min_per_client > labels.len() {
        return Err(Error::config(
            "partition.min_per_client",
            format!(
                "{num_clients} clients x {min_per_client} samples exceeds the {} available",
                labels.len()
            ),
        ));
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments: Vec<Vec<usize>> = vec![Vec::new(); num_clients];

    for class in 0..num_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let proportions = sample_dirichlet(&mut rng, num_clients, alpha);
        let n = members.len();
        let mut cumulative = 0.0;
        let mut start = 0;
        for (client, p) in proportions.iter().enumerate() {
            cumulative += p;
            let end = if client + 1 == num_clients {
                n
            } else {
                ((cumulative * n as f64).floor() as usize).clamp(start, n)
            };
            assignments[client].extend_from_slice(&members[start..end]);
            start = end;
        }
    }

    repair_minimum(&mut assignments, labels, num_classes, min_per_client);
    for a in &mut assignments {
        a.sort_unstable();
    }
    Ok(Partition { assignments })
}

fn repair_minimum(assignments: &mut [Vec<usize>], labels: &[usize], num_classes: usize, min_per_client: usize) {
    let mut counts: Vec<Vec<usize>> = assignments
        .iter()
        .map(|a| {
            let mut c = vec![0; num_classes];
            for &i in a {
                c[labels[i]] += 1;
            }
            c
        })
        .collect();
    while let Some(needy) = assignments.iter().position(|a| a.len() < min_per_client) {
        let donor = (0..assignments.len())
            .max_by(|&a, &b| assignments[a].len().cmp(&assignments[b].len()).then(b.cmp(&a)))
            .expect("at least one client");
        // Feasibility check upstream guarantees the donor can spare a sample.
        debug_assert!(assignments[donor].len() > min_per_client);
        let class = (0..num_classes)
            .max_by(|&a, &b| counts[donor][a].cmp(&counts[donor][b]).then(b.cmp(&a)))
            .expect("at least one class");
        let pos = assignments[donor]
            .iter()
            .rposition(|&i| labels[i] == class)
            .expect("donor holds its most frequent class");
        let sample = assignments[donor].swap_remove(pos);
        counts[donor][class] -= 1;
        counts[needy][class] += 1;
        assignments[needy].push(sample);
    }
}

/// Seeded shuffle, then `max(1, floor((1 - train_fraction) * n))` test rows.
pub fn local_split(indices: &[usize], train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = indices.len();
    if n < 2 {
        return Err(Error::invalid(format!("cannot split {n} samples into train and test")));
    }
    if !(0.0..1.0).contains(&train_fraction) {
        return Err(Error::config("dataset.train_fraction", "must lie in [0, 1)"));
    }
    // The small bias keeps e.g. 0.2 * 20 from flooring to 3.
    let test = (((1.0 - train_fraction) * n as f64 + 1e-9).floor() as usize).clamp(1, n - 1);
    let mut shuffled = indices.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test_rows = shuffled.split_off(n - test);
    Ok((shuffled, test_rows))
}
