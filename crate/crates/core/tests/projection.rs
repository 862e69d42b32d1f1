use craft_core::projection::{craft_correct, config_direction, normalize, AlignmentMatrix, AlignmentTarget};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RANK_TOL: f64 = 1e-10;

/// ref + pinv(U) (rho - U ref), with the pseudoinverse taken from an SVD.
fn svd_oracle(rows: &[Vec<f64>], rho: &[f64], reference: &[f64]) -> Vec<f64> {
    let m = rows.len();
    let d = reference.len();
    let u = DMatrix::from_fn(m, d, |i, j| rows[i][j]);
    let pinv = u.clone().pseudo_inverse(1e-12).unwrap();
    let r = nalgebra::DVector::from_column_slice(reference);
    let rhs = nalgebra::DVector::from_column_slice(rho) - &u * &r;
    (r + pinv * rhs).iter().copied().collect()
}

fn normalized_rows(raw: &[Vec<f64>]) -> AlignmentMatrix<f64> {
    AlignmentMatrix::from_updates(raw, 1e-8).unwrap()
}

fn matrix_rows(u: &AlignmentMatrix<f64>) -> Vec<Vec<f64>> {
    (0..u.rows()).map(|i| u.row(i).to_vec()).collect()
}

fn instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    (1usize..=6, 0usize..=8).prop_flat_map(|(m, extra)| {
        let d = m + extra;
        (
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), m),
            prop::collection::vec(0.05f64..1.0, m),
            prop::collection::vec(-1.0f64..1.0, d),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn output_satisfies_constraints((raw, w, reference) in instance()) {
        prop_assume!(raw.iter().all(|r| r.iter().any(|x| x.abs() > 1e-3)));
        let u = normalized_rows(&raw);
        let rho = AlignmentTarget::from_weights(&w).unwrap();
        let res = craft_correct(&u, &rho, &reference, RANK_TOL).unwrap();
        prop_assume!(res.is_full_rank());
        let ug = u.apply(&res.direction);
        for (a, b) in ug.iter().zip(rho.values()) {
            prop_assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn correction_is_minimal((raw, w, reference) in instance(), seed in any::<u64>()) {
        prop_assume!(raw.iter().all(|r| r.iter().any(|x| x.abs() > 1e-3)));
        let u = normalized_rows(&raw);
        let rho = AlignmentTarget::from_weights(&w).unwrap();
        let res = craft_correct(&u, &rho, &reference, RANK_TOL).unwrap();
        let best: f64 = res.correction.iter().map(|x| x * x).sum();
        // Perturb inside the null space of U: feasibility is preserved.
        let rows = matrix_rows(&u);
        let d = reference.len();
        let um = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        let pinv = um.clone().pseudo_inverse(1e-12).unwrap();
        let proj = DMatrix::identity(d, d) - &pinv * &um;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10 {
            let z = nalgebra::DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
            let n = &proj * z;
            let moved: f64 = res.correction.iter().zip(n.iter()).map(|(c, e)| (c + e).powi(2)).sum();
            prop_assert!(moved >= best * (1.0 - 1e-9) - 1e-12);
        }
    }

    #[test]
    fn zero_reference_is_config((raw, w, _r) in instance()) {
        prop_assume!(raw.iter().all(|r| r.iter().any(|x| x.abs() > 1e-3)));
        let u = normalized_rows(&raw);
        let rho = AlignmentTarget::from_weights(&w).unwrap();
        let zero = vec![0.0; u.dim()];
        let a = craft_correct(&u, &rho, &zero, RANK_TOL).unwrap().direction;
        let b = config_direction(&u, &rho, RANK_TOL).unwrap().direction;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn update_scale_does_not_matter((raw, w, reference) in instance(), scale in 0.01f64..100.0) {
        prop_assume!(raw.iter().all(|r| r.iter().any(|x| x.abs() > 1e-3)));
        let scaled: Vec<Vec<f64>> = raw.iter().map(|r| r.iter().map(|x| x * scale).collect()).collect();
        // Normalization divides by ||v|| + eps, so invariance only holds well above eps.
        let norm = |r: &Vec<f64>| r.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(raw.iter().chain(&scaled).all(|r| norm(r) >= 0.1));
        let rho = AlignmentTarget::from_weights(&w).unwrap();
        let a = craft_correct(&normalized_rows(&raw), &rho, &reference, RANK_TOL).unwrap();
        let b = craft_correct(&normalized_rows(&scaled), &rho, &reference, RANK_TOL).unwrap();
        prop_assume!(a.is_full_rank());
        for (x, y) in a.direction.iter().zip(&b.direction) {
            prop_assert!((x - y).abs() <= 1e-6 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn client_order_does_not_matter((raw, w, reference) in instance()) {
        prop_assume!(raw.iter().all(|r| r.iter().any(|x| x.abs() > 1e-3)));
        let rho = AlignmentTarget::from_weights(&w).unwrap();
        let a = craft_correct(&normalized_rows(&raw), &rho, &reference, RANK_TOL).unwrap();
        let rev_raw: Vec<Vec<f64>> = raw.iter().rev().cloned().collect();
        let rev_w: Vec<f64> = w.iter().rev().copied().collect();
        let rho_rev = AlignmentTarget::from_weights(&rev_w).unwrap();
        let b = craft_correct(&normalized_rows(&rev_raw), &rho_rev, &reference, RANK_TOL).unwrap();
        for (x, y) in a.direction.iter().zip(&b.direction) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
    }
}

#[test]
fn matches_svd_pseudoinverse_on_small_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let m = rng.random_range(1..=3);
        let d = rng.random_range(1..=4);
        let raw: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
        let reference = normalize(&(0..d).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>(), 1e-8).unwrap();
        let u = normalized_rows(&raw);
        let rho = AlignmentTarget::from_weights(&w).unwrap();
        let got = craft_correct(&u, &rho, &reference, RANK_TOL).unwrap().direction;
        let want = svd_oracle(&matrix_rows(&u), rho.values(), &reference);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-10, "m={m} d={d}: {got:?} vs {want:?}");
        }
    }
}

#[test]
fn duplicate_rows_are_handled_in_least_squares() {
    let u = AlignmentMatrix::from_rows(vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let rho = AlignmentTarget::new(vec![0.2, 0.4, 0.4]).unwrap();
    let res = craft_correct(&u, &rho, &[0.0, 0.0], RANK_TOL).unwrap();
    let want = svd_oracle(&matrix_rows(&u), rho.values(), &[0.0, 0.0]);
    assert_eq!(res.gram_rank, 2);
    for (a, b) in res.direction.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!((res.residual_norm() - (0.02f64).sqrt()).abs() < 1e-12);
}
