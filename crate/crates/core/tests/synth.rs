mod common;

use std::fs;

use common::*;
use ndarray::{Array1, Array2, Axis};

use lrsdl::synthdata::{generate, read_labels, read_matrix, recovery_correlation, SynthSpec};
use lrsdl::{Error, LabeledDataset};

fn small() -> SynthSpec {
    SynthSpec { dim: 64, train_per_class: 10, test_per_class: 5, ..SynthSpec::default() }
}

#[test]
fn same_seed_gives_identical_data() {
    let (a, b) = (generate(&small()).unwrap(), generate(&small()).unwrap());
    assert_eq!(a.train.features(), b.train.features());
    assert_eq!(a.test.features(), b.test.features());
    assert_eq!(a.truth, b.truth);
    let c = generate(&SynthSpec { seed: 1, ..small() }).unwrap();
    assert_ne!(a.train.features(), c.train.features());
}

#[test]
fn split_sizes_and_labels() {
    let s = generate(&small()).unwrap();
    assert_eq!(s.train.class_counts(), &[10; 4]);
    assert_eq!(s.test.class_counts(), &[5; 4]);
    assert_eq!(s.train.dim(), 64);
}

#[test]
fn planted_elements_are_unit_norm_with_disjoint_supports() {
    for dim in [400, 64, 37] {
        let s = generate(&SynthSpec { dim, shared_elems: 2, ..small() }).unwrap();
        let mut all: Vec<Array1<f64>> = s.truth.class_elems.iter().flat_map(|m| m.columns().into_iter().map(|c| c.to_owned()).collect::<Vec<_>>()).collect();
        all.extend(s.truth.shared.columns().into_iter().map(|c| c.to_owned()));
        assert_eq!(all.len(), 4 * 2 + 2);
        for (i, a) in all.iter().enumerate() {
            assert!((a.dot(a) - 1.0).abs() < 1e-12);
            assert!(a.iter().all(|&v| v >= 0.0));
            for b in &all[i + 1..] {
                assert!(a.iter().zip(b.iter()).all(|(x, y)| *x == 0.0 || *y == 0.0), "supports overlap");
            }
        }
    }
}

#[test]
fn noiseless_samples_are_element_sums() {
    let spec = SynthSpec { noise_sigma: 0.0, coef_low: 1.0, coef_high: 1.0, train_per_class: 1, test_per_class: 1, ..small() };
    let s = generate(&spec).unwrap();
    for c in 0..4 {
        let expected = s.truth.class_elems[c].sum_axis(Axis(1)) + s.truth.shared.sum_axis(Axis(1));
        for ds in [&s.train, &s.test] {
            let got = ds.class_samples(c).column(0).to_owned();
            assert!((&got - &expected).iter().all(|v| v.abs() < 1e-15));
        }
    }
}

#[test]
fn class_covariance_has_a_clear_low_rank_gap() {
    let spec = SynthSpec::default();
    let s = generate(&spec).unwrap();
    let rank = spec.elems_per_class + spec.shared_elems;
    for c in 0..spec.classes {
        let yc = s.train.class_samples(c).to_owned();
        let mean = yc.mean_axis(Axis(1)).unwrap().insert_axis(Axis(1));
        let centred = &yc - &mean;
        // same nonzero spectrum as the sample covariance
        let gram: Array2<f64> = centred.t().dot(&centred) / yc.ncols() as f64;
        let eig = sym_eigenvalues(&gram);
        let ratio = eig[rank - 1] / eig[rank];
        assert!(ratio > 10.0, "class {}: gap ratio {ratio}", c + 1);
    }
}

#[test]
fn invalid_specs_are_config_errors() {
    let bad = [
        SynthSpec { classes: 0, ..small() },
        SynthSpec { dim: 0, ..small() },
        SynthSpec { train_per_class: 0, ..small() },
        SynthSpec { noise_sigma: -0.1, ..small() },
        SynthSpec { coef_low: 2.0, coef_high: 1.0, ..small() },
        // nine supports cannot fit in a 2x2 image
        SynthSpec { dim: 4, ..small() },
    ];
    for spec in bad {
        assert!(matches!(generate(&spec), Err(Error::Config(_))), "{spec:?}");
    }
}

#[test]
fn recovery_correlation_sanity() {
    let mut r = rng(3);
    let planted = unit_columns(&mut r, 6, 1).column(0).to_owned();
    let aligned = planted.clone().insert_axis(Axis(1)) * -2.0;
    assert!((recovery_correlation(&planted, &aligned).unwrap() - 1.0).abs() < 1e-12);
    let mut ortho = Array2::zeros((6, 1));
    let p = planted.clone();
    ortho[[0, 0]] = p[1];
    ortho[[1, 0]] = -p[0];
    assert!(recovery_correlation(&planted, &ortho).unwrap() < 1e-12);
    assert_eq!(recovery_correlation(&planted, &Array2::zeros((6, 0))).unwrap(), 0.0);
    assert!(matches!(recovery_correlation(&planted, &Array2::zeros((5, 2))), Err(Error::Dimension(_))));
}

#[test]
fn degenerate_files() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.txt");
    fs::write(&m, "3 0\n\n\n\n").unwrap();
    assert_eq!(read_matrix(&m).unwrap().dim(), (3, 0));
    fs::write(&m, "2 2\n1 2\n3").unwrap();
    assert!(matches!(read_matrix(&m), Err(Error::Parse { line: 3, .. })));
    fs::write(&m, "1 1\nNaN\n").unwrap();
    assert!(matches!(read_matrix(&m), Err(Error::Parse { line: 2, .. })));
    let l = dir.path().join("l.txt");
    fs::write(&l, "").unwrap();
    let labels = read_labels(&l).unwrap();
    assert!(labels.is_empty());
    assert!(matches!(LabeledDataset::new(Array2::zeros((2, 0)), labels), Err(Error::Validation(_))));
}
