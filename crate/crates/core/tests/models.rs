use craft_core::models::{client_delta, local_train, Activation, LocalTrainOptions, Mlp, MlpObjective, MlpSpec, Objective};
use craft_core::ParamVector;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type ParamVector32 = craft_core::models::ParamVector<f32>;

const STEP: f64 = 1e-5;

fn batch(rng: &mut ChaCha8Rng, n: usize, p: usize, classes: usize) -> (Array2<f64>, Vec<usize>) {
    let x = Array2::from_shape_fn((n, p), |_| rng.random_range(-2.0..2.0));
    let y = (0..n).map(|_| rng.random_range(0..classes)).collect();
    (x, y)
}

fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-9 { (a - b).abs() } else { (a - b).abs() / scale }
}

#[test]
fn analytic_gradient_matches_finite_differences_across_grid() {
    let grid: &[(usize, &[usize], usize)] = &[(3, &[], 2), (4, &[5], 3), (6, &[4, 3], 4), (5, &[8, 8, 6], 10)];
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for activation in [Activation::Relu, Activation::Tanh] {
        for &(input, hidden, output) in grid {
            for n in [1, 7] {
                let mlp = Mlp::new(MlpSpec::new(input, hidden.to_vec(), output).with_activation(activation)).unwrap();
                let mut params = mlp.init_params::<f64>(rng.random());
                // Nonzero biases so every coordinate carries signal.
                params.values_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
                let (x, y) = batch(&mut rng, n, input, output);
                let (_, grad) = mlp.loss_and_grad(&params, x.view(), &y).unwrap();
                let coords: Vec<usize> = (0..20).map(|_| rng.random_range(0..params.dim())).collect();
                for &c in &coords {
                    let mut plus = params.clone();
                    plus.values_mut()[c] += STEP;
                    let mut minus = params.clone();
                    minus.values_mut()[c] -= STEP;
                    let lp = mlp.loss_and_grad(&plus, x.view(), &y).unwrap().0;
                    let lm = mlp.loss_and_grad(&minus, x.view(), &y).unwrap().0;
                    let fd = (lp - lm) / (2.0 * STEP);
                    let err = relative_error(grad.values()[c], fd);
                    assert!(
                        err <= 1e-4,
                        "{activation:?} {input}-{hidden:?}-{output} n={n} coord {c}: {} vs {fd}",
                        grad.values()[c]
                    );
                }
            }
        }
    }
}

#[test]
fn multi_step_delta_is_sum_of_scaled_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mlp = Mlp::new(MlpSpec::new(4, vec![6], 3)).unwrap();
    let (x, y) = batch(&mut rng, 12, 4, 3);
    let data = craft_core::Dataset::new(x, y, 3).unwrap();
    let indices: Vec<usize> = (0..12).collect();
    let objective = MlpObjective { mlp: &mlp, dataset: &data, indices: &indices };
    let start = mlp.init_params::<f64>(1);
    let lr = 1e-4;
    let opts = LocalTrainOptions { learning_rate: lr, steps: 5, batch_size: None, seed: 0, prox_mu: 0.0 };
    let delta = client_delta(&start, &local_train(&start, &objective, &opts).unwrap()).unwrap();

    // Replay the full-batch steps while summing gradients explicitly.
    let mut theta = start.clone();
    let mut sum = vec![0.0; start.dim()];
    let mut grad = vec![0.0; start.dim()];
    for _ in 0..5 {
        objective.loss_and_grad(theta.values(), &indices, &mut grad).unwrap();
        sum.iter_mut().zip(&grad).for_each(|(s, g)| *s += lr * g);
        theta.step(&grad, lr);
    }
    for (d, s) in delta.iter().zip(&sum) {
        assert!((d - s).abs() <= 1e-15 + 1e-12 * s.abs());
    }
    // First-order agreement with K times the initial gradient.
    objective.loss_and_grad(start.values(), &indices, &mut grad).unwrap();
    let approx: f64 = delta.iter().zip(&grad).map(|(d, g)| (d - 5.0 * lr * g).powi(2)).sum::<f64>().sqrt();
    let size: f64 = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
    assert!(approx <= 1e-2 * size);
}

#[test]
fn f32_and_f64_models_agree_loosely() {
    let mlp = Mlp::new(MlpSpec::new(3, vec![4], 2)).unwrap();
    let p64 = mlp.init_params::<f64>(9);
    let p32 = ParamVector32::new(p64.values().iter().map(|&v| v as f32).collect(), mlp.layout().clone()).unwrap();
    let x64 = Array2::from_shape_vec((2, 3), vec![0.5, -1.0, 0.25, 1.5, 0.0, -0.75]).unwrap();
    let x32 = x64.mapv(|v| v as f32);
    let (l64, _) = mlp.loss_and_grad(&p64, x64.view(), &[0, 1]).unwrap();
    let (l32, _) = mlp.loss_and_grad(&p32, x32.view(), &[0, 1]).unwrap();
    assert!((l64 - l32 as f64).abs() < 1e-5);
}

#[test]
fn reference_architecture_layout() {
    let mlp = Mlp::new(MlpSpec::new(784, vec![200, 200], 10)).unwrap();
    let p: ParamVector = mlp.init_params(0);
    assert_eq!(p.layout().lengths(), vec![784 * 200, 200, 200 * 200, 200, 200 * 10, 10]);
    // Biases start at zero; weights are within the uniform fan bound.
    let bound = (6.0f64 / (784.0 + 200.0)).sqrt();
    assert!(p.layer(0).iter().all(|w| w.abs() <= bound));
    assert!(p.layer(1).iter().all(|&b| b == 0.0));
}
