mod common;

use common::{rng, symmetric_eigenvalues, uniform_points};
use obstacle_ridge::solve::{ridge_objective, ERM_NORM_TOLERANCE};
use obstacle_ridge::*;
use proptest::prelude::*;
use rand::Rng;

fn instance(n: usize, gamma: f64, seed: u64) -> (GramMatrix, Vec<f64>) {
    let k = EuclideanKernel::new(3).unwrap();
    let q = sphere_quadrature(3, 1, 0).unwrap();
    let pts = PointSet::from_rows(&uniform_points(n, 3, 0.0, 1.0, seed)).unwrap();
    let g = assemble_gram(&k, &pts, gamma, &q).unwrap();
    let mut r = rng(seed ^ 0xabc);
    let y = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    (g, y)
}

#[test]
fn perturbations_do_not_decrease_the_objective() {
    let (g, y) = instance(80, 4.0, 1);
    let lambda = 0.05;
    let n = g.n() as f64;
    let sol = ridge_solve(&g, &y, n * lambda).unwrap();
    let base = ridge_objective(&g, &y, &sol.c, lambda).unwrap();
    let norm = sol.c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut r = rng(77);
    for _ in 0..100 {
        let mut u: Vec<f64> = (0..g.n()).map(|_| r.random_range(-1.0..1.0)).collect();
        let un = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        u.iter_mut().for_each(|v| *v *= 1e-4 * norm / un);
        let c: Vec<f64> = sol.c.iter().zip(&u).map(|(a, b)| a + b).collect();
        assert!(ridge_objective(&g, &y, &c, lambda).unwrap() >= base - 1e-12);
    }
}

#[test]
fn erm_trace_is_monotone_and_matches_ridge() {
    let (g, y) = instance(60, 3.0, 2);
    let free = erm_solve(&g, &y, 1e6).unwrap();
    let full = h_norm_sq(&g, &free.c).unwrap();
    let m = 0.3 * full.sqrt();
    let e = erm_solve(&g, &y, m).unwrap();
    assert!(e.lambda_active > 0.0);
    let norm = h_norm_sq(&g, &e.c).unwrap();
    assert!((norm - m * m).abs() <= ERM_NORM_TOLERANCE * m * m);

    let mut trace = e.trace.clone();
    trace.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in trace.windows(2) {
        assert!(w[1].1 <= w[0].1 * (1.0 + 1e-12), "{:?} then {:?}", w[0], w[1]);
    }

    let ridge = ridge_solve(&g, &y, g.n() as f64 * e.lambda_active).unwrap();
    for (a, b) in ridge.c.iter().zip(&e.c) {
        assert!((a - b).abs() <= 1e-8 * (1.0 + a.abs()));
    }
}

#[test]
fn erm_small_bound_shrinks_coefficients() {
    let (g, y) = instance(30, 3.0, 3);
    let e = erm_solve(&g, &y, 1e-8).unwrap();
    assert!(e.c.iter().all(|v| v.abs() < 1e-6));
}

#[test]
fn ridge_solve_at_moderate_size() {
    let (g, y) = instance(512, 5.0, 4);
    let s = ridge_solve(&g, &y, 512.0 * 1e-3).unwrap();
    let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(s.residual_norm <= 1e-8 * ynorm);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn quadratic_form_is_nonnegative(seed in 0u64..1000, gamma in 0.5f64..10.0) {
        let (g, _) = instance(5, gamma, seed);
        let ev = symmetric_eigenvalues(g.as_slice(), 5);
        prop_assert!(ev[0] > -1e-12 * gamma);
        let mut r = rng(seed);
        let c: Vec<f64> = (0..5).map(|_| r.random_range(-3.0..3.0)).collect();
        let v = h_norm_sq(&g, &c).unwrap();
        prop_assert!(v >= 0.0);
        // Against the spectral bounds of the oracle.
        let cc: f64 = c.iter().map(|x| x * x).sum();
        prop_assert!(v <= ev[4] * cc * (1.0 + 1e-12));
        prop_assert!(v >= ev[0].max(0.0) * cc * (1.0 - 1e-12) - 1e-12);
    }

    #[test]
    fn residual_contract(seed in 0u64..1000, log_nl in -6.0f64..2.0) {
        let (g, y) = instance(20, 2.0, seed);
        let s = ridge_solve(&g, &y, 10f64.powf(log_nl)).unwrap();
        let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(s.residual_norm <= 1e-8 * ynorm);
    }
}
