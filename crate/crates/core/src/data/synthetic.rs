use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Gaussian class clusters with unit covariance.
///
/// Class means are `class_sep / sqrt(2)` times orthonormal directions of a
/// seeded random frame, so every pair of means is `class_sep` apart (when
/// `classes > dims` the directions are random unit vectors instead). Labels
/// are balanced and shuffled; features are standardized per dimension.
pub fn synthetic_task<T: Scalar>(
    classes: usize,
    dims: usize,
    samples: usize,
    class_sep: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    if classes == 0 || dims == 0 || samples == 0 {
        return Err(Error::invalid("synthetic task needs classes, dims and samples >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gaussian = || -> f64 { StandardNormal.sample(&mut rng) };

    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(classes);
    for _ in 0..classes {
        let mut v: Vec<f64> = (0..dims).map(|_| gaussian()).collect();
        if frame.len() < dims {
            for e in &frame {
                let proj: f64 = v.iter().zip(e).map(|(a, b)| a * b).sum();
                for (x, y) in v.iter_mut().zip(e) {
                    *x -= proj * y;
                }
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        frame.push(v);
    }
    let radius = class_sep / std::f64::consts::SQRT_2;

    let mut labels: Vec<usize> = (0..samples).map(|i| i % classes).collect();
    let mut raw = Array2::<f64>::zeros((samples, dims));
    for (i, &label) in labels.iter().enumerate() {
        for j in 0..dims {
            raw[[i, j]] = radius * frame[label][j] + gaussian();
        }
    }
    let mut order: Vec<usize> = (0..samples).collect();
    order.shuffle(&mut rng);
    let raw = raw.select(ndarray::Axis(0), &order);
    labels = order.iter().map(|&i| labels[i]).collect();

    let n = samples as f64;
    let mut features = Array2::<T>::zeros((samples, dims));
    for j in 0..dims {
        let col = raw.column(j);
        let mean = col.sum() / n;
        let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
        for i in 0..samples {
            features[[i, j]] = T::lit((raw[[i, j]] - mean) * scale);
        }
    }
    Dataset::new(features, labels, classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_under_seed() {
        let a = synthetic_task::<f64>(4, 6, 100, 2.0, 9).unwrap();
        assert_eq!(a, synthetic_task::<f64>(4, 6, 100, 2.0, 9).unwrap());
        assert_ne!(a, synthetic_task::<f64>(4, 6, 100, 2.0, 10).unwrap());
    }

    #[test]
    fn balanced_and_standardized() {
        let d = synthetic_task::<f64>(5, 3, 1000, 4.0, 1).unwrap();
        assert_eq!(d.class_counts(&(0..1000).collect::<Vec<_>>()), vec![200; 5]);
        for j in 0..3 {
            let col = d.features().column(j);
            let mean = col.sum() / 1000.0;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 1000.0;
            assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_empty_shapes() {
        assert!(synthetic_task::<f64>(0, 3, 10, 1.0, 0).is_err());
        assert!(synthetic_task::<f64>(2, 0, 10, 1.0, 0).is_err());
    }
}
