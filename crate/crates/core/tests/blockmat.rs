mod common;

use common::*;
use ndarray::{array, Array2};
use proptest::prelude::*;

use lrsdl::blockmat::{apply_m, mean_matrix, normalize_atoms, soft_threshold, spectral_bound, svt, BlockLayout};
use lrsdl::Error;

fn partition(seed: u64, blocks: usize) -> Vec<usize> {
    (0..blocks).map(|j| 1 + ((seed as usize).wrapping_mul(31) + 7 * j) % 4).collect()
}

#[test]
fn doubling_matches_mask_form_on_square_blocks() {
    let mut r = rng(1);
    let a = randn(&mut r, 6, 6);
    let m = apply_m(&a, &[2, 4], &[2, 4]).unwrap();
    assert!(max_abs(&m, &mask_form(&a, &[2, 4], &[2, 4])) < 1e-12);
}

#[test]
fn doubling_rejects_mismatched_partitions() {
    let a = Array2::<f64>::zeros((5, 4));
    assert!(matches!(apply_m(&a, &[2, 3], &[4]), Err(Error::Partition(_))));
    assert!(matches!(apply_m(&a, &[2, 2], &[2, 2]), Err(Error::Partition(_))));
}

#[test]
fn layout_offsets_tile_the_matrix() {
    let l = BlockLayout::new(vec![3, 1, 2], vec![2, 4, 1], 2).unwrap();
    assert_eq!((l.total_samples(), l.total_atoms(), l.shared_atoms()), (6, 7, 2));
    assert_eq!(l.sample_range(1), 3..4);
    assert_eq!(l.atom_range(2), 6..7);
    assert_eq!(l.class_of_samples(), vec![0, 0, 0, 1, 2, 2]);
}

#[test]
fn mean_matrix_preserves_row_sums() {
    let mut r = rng(2);
    let a = randn(&mut r, 4, 7);
    let mu = mean_matrix(&a, Some(7)).unwrap();
    let (s_mu, s_a) = (mu.sum_axis(ndarray::Axis(1)), a.sum_axis(ndarray::Axis(1)));
    assert!(s_mu.iter().zip(s_a.iter()).all(|(x, y)| (x - y).abs() < 1e-12));
    assert!(mu.columns().into_iter().all(|c| c == mu.column(0)));
}

#[test]
fn mean_matrix_of_empty_input_is_an_error() {
    assert!(mean_matrix(&Array2::zeros((3, 0)), None).is_err());
    assert!(mean_matrix(&Array2::zeros((3, 2)), Some(0)).is_err());
}

#[test]
fn svt_at_second_singular_value_leaves_rank_one() {
    let mut r = rng(3);
    let a = randn(&mut r, 8, 5);
    let (_, s, _) = jacobi_svd(&a);
    let z = svt(&a, s[1]).unwrap();
    assert!(max_abs(&z, &svt_oracle(&a, s[1])) < 1e-10);
    let zs = jacobi_svd(&z).1;
    assert!(zs[1] < 1e-10, "second singular value {}", zs[1]);
    assert!((zs[0] - (s[0] - s[1])).abs() < 1e-10);
}

#[test]
fn spectral_bound_never_underestimates() {
    let mut r = rng(4);
    for i in 0..100 {
        let n = 2 + i % 9;
        let b = randn(&mut r, n + 3, n);
        let gram = b.t().dot(&b);
        let exact = sym_eig_max(&gram);
        let est = spectral_bound(&gram).unwrap();
        assert!(est >= exact * (1.0 - 1e-12), "estimate {est} below {exact}");
        assert!(est <= exact * 1.02, "estimate {est} more than 2% above {exact}");
    }
}

#[test]
fn normalized_atoms_fit_in_the_unit_ball() {
    let mut r = rng(5);
    let d = randn(&mut r, 7, 9) * 3.0;
    let mut d = normalize_atoms(&d);
    d.column_mut(0).fill(0.0);
    let n = normalize_atoms(&d);
    assert!(n.columns().into_iter().all(|c| c.dot(&c).sqrt() <= 1.0 + 1e-12));
    assert!(n.column(0).iter().all(|v| *v == 0.0));
}

#[test]
fn thresholds_reject_negative_weights() {
    let a = array![[1.0]];
    assert!(matches!(soft_threshold(&a, -1.0), Err(Error::InvalidArgument(_))));
    assert!(matches!(svt(&a, -1.0), Err(Error::InvalidArgument(_))));
}

/// Minimiser of `½(z − a)² + α|z|` by successively refined grid scans.
fn grid_prox(a: f64, alpha: f64) -> f64 {
    let obj = |z: f64| 0.5 * (z - a) * (z - a) + alpha * z.abs();
    let (mut lo, mut hi) = (-a.abs() - 1.0, a.abs() + 1.0);
    let mut best = 0.0;
    for _ in 0..8 {
        let step = (hi - lo) / 200.0;
        best = (0..=200)
            .map(|i| lo + i as f64 * step)
            .min_by(|x, y| obj(*x).partial_cmp(&obj(*y)).unwrap())
            .unwrap();
        lo = best - 2.0 * step;
        hi = best + 2.0 * step;
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn doubling_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0, blocks in 1usize..4) {
        let (rows, cols) = (partition(seed, blocks), partition(seed ^ 0x5a, blocks));
        let mut r = rng(seed);
        let x = randn(&mut r, rows.iter().sum(), cols.iter().sum());
        let y = randn(&mut r, rows.iter().sum(), cols.iter().sum());
        let lhs = apply_m(&(a * &x + b * &y), &rows, &cols).unwrap();
        let rhs = a * apply_m(&x, &rows, &cols).unwrap() + b * apply_m(&y, &rows, &cols).unwrap();
        prop_assert!(max_abs(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn doubling_commutes_with_block_transpose(seed in any::<u64>(), blocks in 1usize..5) {
        let (rows, cols) = (partition(seed, blocks), partition(seed ^ 0x33, blocks));
        let x = randn(&mut rng(seed), rows.iter().sum(), cols.iter().sum());
        let lhs = apply_m(&x.t().to_owned(), &cols, &rows).unwrap();
        let rhs = apply_m(&x, &rows, &cols).unwrap().t().to_owned();
        prop_assert!(max_abs(&lhs, &rhs) == 0.0);
    }

    #[test]
    fn doubling_equals_mask_form(seed in any::<u64>(), blocks in 1usize..5) {
        let (rows, cols) = (partition(seed, blocks), partition(seed ^ 0x77, blocks));
        let x = randn(&mut rng(seed), rows.iter().sum(), cols.iter().sum());
        prop_assert!(max_abs(&apply_m(&x, &rows, &cols).unwrap(), &mask_form(&x, &rows, &cols)) < 1e-12);
    }

    #[test]
    fn soft_threshold_is_the_l1_prox(seed in any::<u64>(), alpha in 0.0f64..2.0) {
        let x = randn(&mut rng(seed), 3, 4) * 2.0;
        let out = soft_threshold(&x, alpha).unwrap();
        for (a, z) in x.iter().zip(out.iter()) {
            prop_assert!((z - grid_prox(*a, alpha)).abs() < 1e-6);
        }
    }

    #[test]
    fn svt_beats_random_perturbations(seed in any::<u64>(), tau in 0.0f64..3.0) {
        let mut r = rng(seed);
        let a = randn(&mut r, 6, 4);
        let z = svt(&a, tau).unwrap();
        let obj = |m: &Array2<f64>| 0.5 * frob_sq(&(m - &a)) + tau * nuclear(m);
        let base = obj(&z);
        for _ in 0..20 {
            let p = &z + &(randn(&mut r, 6, 4) * 0.05);
            prop_assert!(base <= obj(&p) + 1e-10);
        }
    }

    #[test]
    fn svt_matches_the_jacobi_oracle(seed in any::<u64>(), tau in 0.0f64..4.0, tall in any::<bool>()) {
        let (m, n) = if tall { (7, 4) } else { (3, 6) };
        let a = randn(&mut rng(seed), m, n);
        prop_assert!(max_abs(&svt(&a, tau).unwrap(), &svt_oracle(&a, tau)) < 1e-8);
    }
}
