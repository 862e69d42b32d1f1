//! Client-level accuracy summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Mean of the top `max(1, n / 10)` clients.
    pub best10: f64,
    /// Mean of the bottom `max(1, n / 10)` clients.
    pub worst10: f64,
    /// Population standard deviation.
    pub std: f64,
}

pub fn summarize(accuracies: &[f64]) -> Result<Summary> {
    if accuracies.is_empty() {
        return Err(Error::invalid("cannot summarize an empty accuracy vector"));
    }
    let n = accuracies.len();
    let k = (n / 10).max(1);
    let mut sorted = accuracies.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let worst10 = sorted[..k].iter().sum::<f64>() / k as f64;
    let best10 = sorted[n - k..].iter().sum::<f64>() / k as f64;
    let var = sorted.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
    Ok(Summary {
        mean,
        best10,
        worst10,
        std: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_value_ramp() {
        let accs: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let s = summarize(&accs).unwrap();
        assert!((s.mean - 0.55).abs() < 1e-12);
        assert_eq!(s.best10, 1.0);
        assert_eq!(s.worst10, 0.1);
    }

    #[test]
    fn constant_vector() {
        let s = summarize(&[0.3; 17]).unwrap();
        assert!(s.std.abs() < 1e-12);
        assert!((s.best10 - s.mean).abs() < 1e-12 && (s.worst10 - s.mean).abs() < 1e-12);
    }

    #[test]
    fn twenty_five_clients_use_two_per_tail() {
        let accs: Vec<f64> = (0..25).map(|i| ((i * 7) % 25) as f64 / 24.0).collect();
        let s = summarize(&accs).unwrap();
        // naive oracle: selection by repeated max/min removal
        let mut pool = accs.clone();
        let mut top = 0.0;
        for _ in 0..2 {
            let (i, v) = pool.iter().copied().enumerate().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
            top += v;
            pool.remove(i);
        }
        let mut pool = accs.clone();
        let mut bottom = 0.0;
        for _ in 0..2 {
            let (i, v) = pool.iter().copied().enumerate().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
            bottom += v;
            pool.remove(i);
        }
        assert!((s.best10 - top / 2.0).abs() < 1e-12);
        assert!((s.worst10 - bottom / 2.0).abs() < 1e-12);
        let mean = accs.iter().sum::<f64>() / 25.0;
        let std = (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 25.0).sqrt();
        assert!((s.mean - mean).abs() < 1e-12 && (s.std - std).abs() < 1e-12);
    }

    #[test]
    fn small_populations_use_one_per_tail() {
        let s = summarize(&[0.2, 0.9, 0.5]).unwrap();
        assert_eq!((s.best10, s.worst10), (0.9, 0.2));
        assert!(summarize(&[]).is_err());
    }
}
