use obstacle_ridge::experiments::{default_widths, fit_loglog_slope, illposed_data, SyntheticTarget};
use obstacle_ridge::oracle::mc_cube_mean;
use obstacle_ridge::rng::tag;
use obstacle_ridge::*;

#[test]
fn target_energy_examples() {
    let one = SyntheticTarget::new(PointSet::from_rows(&[vec![0.5; 3]]).unwrap(), vec![1.0], 2.5, 0).unwrap();
    assert_eq!(one.energy(), 2.5);
    let z = PointSet::from_rows(&[vec![0.2, 0.5, 0.5], vec![0.8, 0.5, 0.5]]).unwrap();
    let two = SyntheticTarget::new(z.clone(), vec![1.0, 1.0], 2.0, 0).unwrap();
    let g12 = 1.0 / (2.0 * std::f64::consts::PI * 0.6);
    assert!((two.energy() - (4.0 + 2.0 * g12)).abs() < 1e-14);
    let zero = SyntheticTarget::new(z, vec![0.0, 0.0], 2.0, 0).unwrap();
    assert_eq!(zero.energy(), 0.0);
    assert_eq!(zero.eval(&[0.3, 0.3, 0.3]), 0.0);
}

#[test]
fn synthetic_target_layout() {
    let t = synth_target(3, 7, 2.0, 4).unwrap();
    assert!(t.centers().as_slice().iter().all(|v| (0.2..0.8).contains(v)));
    assert!(t.coeffs().iter().all(|a| (-1.0..=1.0).contains(a)));
    assert!(t.energy() >= 0.0);
    let bound: f64 = t.coeffs().iter().map(|a| a.abs()).sum::<f64>() * 2.0;
    assert!(t.eval(t.centers().row(0)).abs() <= bound);
    assert_eq!(t, synth_target(3, 7, 2.0, 4).unwrap());
    assert!(synth_target(3, 0, 2.0, 4).is_err());
    assert!(synth_target(3, 2, 0.0, 4).is_err());
}

#[test]
fn noise_is_centered() {
    let t = synth_target(3, 2, 2.0, 1).unwrap();
    let rho = 0.7;
    let n = 100_000;
    let ds = sample_dataset(&t, n, rho, 12).unwrap();
    let mean: f64 = (0..n).map(|i| ds.y()[i] - t.eval(ds.x().row(i))).sum::<f64>() / n as f64;
    assert!(mean.abs() <= 4.0 * rho / (n as f64).sqrt());
    assert!(ds.x().as_slice().iter().all(|v| (0.0..1.0).contains(v)));
}

#[test]
fn mse_of_zero_model_is_target_norm() {
    let t = synth_target(3, 5, 2.0, 0).unwrap();
    let ds = sample_dataset(&t, 20, 0.0, 0).unwrap();
    let zero = FittedModel::new(ds.x().clone(), vec![0.0; 20], 3.0, 0.1).unwrap();
    let mse = mse_estimate(&zero, &t, 100_000, 3).unwrap();
    let norm = mc_cube_mean(3, 1_000_000, 99, tag::TEST, |x| t.eval(x).powi(2)).unwrap();
    let se = (mse.std_error.powi(2) + norm.std_error.powi(2)).sqrt();
    assert!((mse.value - norm.value).abs() <= 5.0 * se);
}

#[test]
fn model_as_target_has_zero_error() {
    let t = synth_target(3, 5, 2.0, 0).unwrap();
    let q = sphere_quadrature(3, 1, 0).unwrap();
    let ds = sample_dataset(&t, 60, 0.0, 1).unwrap();
    let m = fit(&ds, 3.0, 0.01, &q).unwrap();
    let as_target = SyntheticTarget::new(m.centers().unwrap(), m.c.clone(), m.gamma, 0).unwrap();
    assert_eq!(mse_estimate(&m, &as_target, 2000, 5).unwrap().value, 0.0);
}

#[test]
fn test_seed_changes_error_estimate_only() {
    let t = synth_target(3, 5, 2.0, 0).unwrap();
    let q = sphere_quadrature(3, 1, 0).unwrap();
    let ds = sample_dataset(&t, 200, 0.3, 2).unwrap();
    let m = fit(&ds, 3.0, 0.05, &q).unwrap();
    let a = mse_estimate(&m, &t, 20_000, 1).unwrap();
    let b = mse_estimate(&m, &t, 20_000, 2).unwrap();
    assert_ne!(a.value, b.value);
    let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
    assert!((a.value - b.value).abs() <= 5.0 * se);
    assert_eq!(
        m,
        fit(&sample_dataset(&t, 200, 0.3, 2).unwrap(), 3.0, 0.05, &q).unwrap()
    );
}

#[test]
fn noiseless_error_falls_as_obstacles_shrink() {
    let mut prev = f64::INFINITY;
    for gamma0 in [0.5, 1.0, 2.0] {
        let cfg = ExperimentConfig {
            n_grid: vec![400],
            seeds: vec![0, 1],
            gamma0,
            linked_kappa: Some(1.0),
            noise_sd: 0.0,
            ..ExperimentConfig::default()
        };
        let r = run_rate_study(&cfg).unwrap();
        assert!(
            r.mean_mse[0] < prev,
            "gamma0 = {gamma0}: {} after {prev}",
            r.mean_mse[0]
        );
        prev = r.mean_mse[0];
    }
}

#[test]
fn small_rate_study_shape() {
    let cfg = ExperimentConfig {
        n_grid: vec![64, 128, 256],
        seeds: vec![3, 4],
        test_size: 2000,
        ..ExperimentConfig::default()
    };
    let r = run_rate_study(&cfg).unwrap();
    assert_eq!(r.cells.len(), 6);
    assert!(r.cells.iter().all(|c| c.mse >= 0.0));
    assert!(r.slope.is_finite() && r.slope < 0.0);
    assert_eq!(r.seed_slopes.len(), 2);
    assert_eq!(
        r,
        run_rate_study(&cfg)
            .unwrap_or_else(|e| panic!("{e}"))
            .with_same_timing(&r)
    );

    let bad = ExperimentConfig {
        n_grid: vec![128, 64],
        ..cfg.clone()
    };
    assert!(matches!(run_rate_study(&bad), Err(Error::Param(_))));
}

trait SameTiming {
    fn with_same_timing(self, other: &Self) -> Self;
}

impl SameTiming for RateStudyResult {
    fn with_same_timing(mut self, other: &Self) -> Self {
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            a.wall_ms = b.wall_ms;
        }
        self
    }
}

#[test]
fn cell_failures_name_the_cell() {
    let cfg = ExperimentConfig {
        n_grid: vec![8],
        seeds: vec![5],
        gamma0: f64::MAX,
        test_size: 1000,
        ..ExperimentConfig::default()
    };
    match run_rate_study(&cfg) {
        Err(Error::Cell { n: 8, seed: 5, .. }) => {}
        other => panic!("expected a cell error, got {other:?}"),
    }
}

#[test]
fn slope_fitter_recovers_exponents() {
    let ns = [256.0, 512.0, 1024.0, 2048.0, 4096.0];
    for b in [-0.4, -1.0 / 3.0, 1.0, -2.0] {
        let ys: Vec<f64> = ns.iter().map(|n: &f64| 0.7 * n.powf(b)).collect();
        assert!((fit_loglog_slope(&ns, &ys).unwrap().0 - b).abs() < 1e-10);
    }
}

#[test]
fn illposed_demo_scaling() {
    for d in [3usize, 4, 5] {
        let widths = default_widths(d, 0).unwrap();
        let r = illposed_demo(d, &widths, 0).unwrap();
        assert!((r.energy_exponent - (d as f64 - 2.0)).abs() <= 1e-6);
        for w in r.rows.windows(2) {
            let ratio = w[1].energy / w[0].energy;
            assert!((ratio - 0.5f64.powi(d as i32 - 2)).abs() < 1e-12);
            assert!(w[1].l2_norm < w[0].l2_norm);
        }
        assert!(r.rows.iter().all(|row| row.interpolation_error == 0.0));
    }
}

#[test]
fn illposed_demo_rejects_wide_bumps() {
    let ds = illposed_data(3, 0).unwrap();
    assert_eq!(ds.len(), 10);
    let widths = default_widths(3, 0).unwrap();
    let too_wide = [widths[0] * 2.0, widths[0]];
    assert!(matches!(illposed_demo(3, &too_wide, 0), Err(Error::Geometry(_))));
    assert!(matches!(illposed_demo(3, &[0.01, 0.02], 0), Err(Error::Param(_))));
}
