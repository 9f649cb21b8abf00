mod common;

use common::{rng, uniform_points};
use obstacle_ridge::estimator::fit_with_gram;
use obstacle_ridge::*;
use rand::Rng;

fn dataset(n: usize, lo: f64, hi: f64, seed: u64) -> Dataset {
    let mut r = rng(seed + 1000);
    let y = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    Dataset::new(PointSet::from_rows(&uniform_points(n, 3, lo, hi, seed)).unwrap(), y).unwrap()
}

#[test]
fn training_capacitary_means_equal_gram_image() {
    // Crowded points so that many obstacles overlap.
    let ds = dataset(120, 0.0, 0.4, 1);
    let gamma = 3.0;
    for level in [1, 2, 3] {
        let q = sphere_quadrature(3, level, 0).unwrap();
        let k = EuclideanKernel::new(3).unwrap();
        let g = assemble_gram(&k, ds.x(), gamma, &q).unwrap();
        assert!(g.fast_path_count() < 120 * 119 / 2);
        let m = fit_with_gram(&ds, &g, 0.01).unwrap();
        let gc = g.matvec(&m.c).unwrap();
        for (i, gci) in gc.iter().enumerate() {
            let s = smoothed_predict(&m, ds.x().row(i), &q).unwrap();
            assert!((s - gci).abs() <= 1e-8 * gamma, "level {level}, point {i}");
        }
    }
}

#[test]
fn smoothed_equals_plain_far_from_centers() {
    let ds = dataset(10, 0.0, 0.3, 2);
    let q = sphere_quadrature(3, 2, 0).unwrap();
    let m = fit(&ds, 8.0, 0.1, &q).unwrap();
    for x in [[0.9, 0.9, 0.9], [1.5, -0.2, 0.4]] {
        let a = predict(&m, &x).unwrap();
        let b = smoothed_predict(&m, &x, &q).unwrap();
        assert!((a - b).abs() <= 1e-8 * a.abs().max(1e-3));
    }
}

#[test]
fn fit_is_linear_in_responses() {
    let q = sphere_quadrature(3, 1, 0).unwrap();
    let a = dataset(40, 0.0, 1.0, 3);
    let mut r = rng(9);
    let y2: Vec<f64> = (0..40).map(|_| r.random_range(-1.0..1.0)).collect();
    let b = Dataset::new(a.x().clone(), y2.clone()).unwrap();
    let sum = Dataset::new(a.x().clone(), a.y().iter().zip(&y2).map(|(u, v)| u + v).collect()).unwrap();
    let (ma, mb, ms) = (
        fit(&a, 3.0, 0.02, &q).unwrap(),
        fit(&b, 3.0, 0.02, &q).unwrap(),
        fit(&sum, 3.0, 0.02, &q).unwrap(),
    );
    for i in 0..40 {
        assert!((ms.c[i] - ma.c[i] - mb.c[i]).abs() <= 1e-10 * (1.0 + ms.c[i].abs()));
    }
}

#[test]
fn coefficients_shrink_with_lambda() {
    let q = sphere_quadrature(3, 1, 0).unwrap();
    let ds = dataset(50, 0.0, 1.0, 0);
    let mut prev = f64::INFINITY;
    for lambda in [1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0] {
        let m = fit(&ds, 2.0, lambda, &q).unwrap();
        let norm = m.c.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= prev);
        prev = norm;
    }
}

#[test]
fn batch_prediction_matches_pointwise() {
    let q = sphere_quadrature(3, 1, 0).unwrap();
    let m = fit(&dataset(30, 0.0, 1.0, 5), 3.0, 0.1, &q).unwrap();
    let xs = PointSet::from_rows(&uniform_points(50, 3, -0.2, 1.2, 6)).unwrap();
    let batch = predict_batch(&m, &xs).unwrap();
    for (j, v) in batch.iter().enumerate() {
        assert_eq!(*v, predict(&m, xs.row(j)).unwrap());
    }
    // Finite at the centers themselves.
    for i in 0..m.len() {
        assert!(predict(&m, m.center(i)).unwrap().is_finite());
    }
}

#[test]
fn erm_fit_respects_bound() {
    let q = sphere_quadrature(3, 1, 0).unwrap();
    let ds = dataset(40, 0.0, 1.0, 7);
    let k = EuclideanKernel::new(3).unwrap();
    let g = assemble_gram(&k, ds.x(), 2.0, &q).unwrap();
    let m = erm_fit(&ds, 2.0, 0.5, &q).unwrap();
    assert!(m.lambda > 0.0);
    assert!((h_norm_sq(&g, &m.c).unwrap() - 0.25).abs() <= 1e-6 * 0.25);
    let tiny = erm_fit(&ds, 2.0, 1e-9, &q).unwrap();
    assert!(predict(&tiny, &[0.5; 3]).unwrap().abs() < 1e-6);
}
