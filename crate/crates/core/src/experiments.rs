//! Synthetic targets, data generation, rate studies and the bump-function
//! demonstration that unrenormalized least squares is ill posed.

use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{param, shape, Error, Result};
use crate::estimator::{
    erm_fit_with_gram, fit_with_gram, predict, schedule_params, Dataset, FittedModel, Mode, Schedule,
};
use crate::gram::assemble_gram;
use crate::kernel::{EuclideanKernel, GreenKernel};
use crate::oracle::{mc_cube_mean, McEstimate, Moments};
use crate::points::{distance, PointSet};
use crate::rng::{derive_seed, stream, tag};
use crate::sphere::{gauss_legendre, sample_unit_sphere, sphere_quadrature};

/// Sphere rule level used for target energies.
pub const TARGET_QUAD_LEVEL: u32 = 3;

/// `f*(x) = sum_k a_k min(G(z_k, x), tau)` with its exact energy `a^T G~ a`.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTarget {
    kernel: EuclideanKernel,
    centers: PointSet,
    coeffs: Vec<f64>,
    tau: f64,
    energy: f64,
}

impl SyntheticTarget {
    /// Builds a target from explicit parts; the energy uses the level
    /// [`TARGET_QUAD_LEVEL`] sphere rule for overlapping centers.
    pub fn new(centers: PointSet, coeffs: Vec<f64>, tau: f64, seed: u64) -> Result<Self> {
        if centers.is_empty() || centers.len() != coeffs.len() {
            return Err(shape(format!(
                "{} centers and {} coefficients",
                centers.len(),
                coeffs.len()
            )));
        }
        let kernel = EuclideanKernel::new(centers.dim())?;
        let q = sphere_quadrature(centers.dim(), TARGET_QUAD_LEVEL, seed)?;
        let g = assemble_gram(&kernel, &centers, tau, &q)?;
        let energy = g.quad_form(&coeffs)?.max(0.0);
        Ok(Self {
            kernel,
            centers,
            coeffs,
            tau,
            energy,
        })
    }

    pub fn kernel(&self) -> &EuclideanKernel {
        &self.kernel
    }

    pub fn centers(&self) -> &PointSet {
        &self.centers
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `E(f*, f*)`.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn dim(&self) -> usize {
        self.centers.dim()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(k, a)| a * self.kernel.truncated_radial(distance(self.centers.row(k), x), self.tau))
            .sum()
    }
}

/// `K` centers uniform in `[0.2, 0.8]^d` with coefficients uniform in
/// `[-1, 1]`.
pub fn synth_target(d: usize, centers: usize, tau: f64, seed: u64) -> Result<SyntheticTarget> {
    if centers < 1 {
        return Err(param("a target needs at least one center"));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(param(format!("target threshold must be positive, got {tau}")));
    }
    if d < 3 {
        return Err(Error::Dimension(d));
    }
    let mut rz = stream(seed, &[tag::TARGET, 0]);
    let coords: Vec<f64> = (0..centers * d).map(|_| rz.random_range(0.2..0.8)).collect();
    let mut ra = stream(seed, &[tag::TARGET, 1]);
    let coeffs: Vec<f64> = (0..centers).map(|_| ra.random_range(-1.0..=1.0)).collect();
    SyntheticTarget::new(PointSet::new(d, coords)?, coeffs, tau, seed)
}

/// `X_i` uniform on `[0, 1]^d`, `Y_i = f*(X_i) + N(0, noise_sd^2)`, with
/// covariates and noise on separate streams.
pub fn sample_dataset(t: &SyntheticTarget, n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n < 1 {
        return Err(param("need n >= 1"));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(param(format!("noise level must be non-negative, got {noise_sd}")));
    }
    let d = t.dim();
    let mut rx = stream(seed, &[tag::COVARIATES]);
    let coords: Vec<f64> = (0..n * d).map(|_| rx.random::<f64>()).collect();
    let x = PointSet::new(d, coords)?;
    let mut y: Vec<f64> = x.rows().map(|r| t.eval(r)).collect();
    if noise_sd > 0.0 {
        let normal = Normal::new(0.0, noise_sd).map_err(|e| param(e.to_string()))?;
        let mut re = stream(seed, &[tag::NOISE]);
        y.iter_mut().for_each(|v| *v += normal.sample(&mut re));
    }
    Dataset::new(x, y)
}

/// Monte Carlo estimate of `|f - f*|^2_{L2(nu)}` on fresh uniform points.
pub fn mse_estimate(m: &FittedModel, t: &SyntheticTarget, test_size: usize, seed: u64) -> Result<McEstimate> {
    if test_size < 1000 {
        return Err(param(format!("need at least 1000 test points, got {test_size}")));
    }
    if m.d != t.dim() {
        return Err(shape("model and target dimensions differ"));
    }
    mc_cube_mean(m.d, test_size, seed, tag::TEST, |x| {
        let e = predict(m, x).unwrap_or(f64::NAN) - t.eval(x);
        e * e
    })
}

/// Least-squares slope of `log y` against `log x` and its standard error
/// (zero for two points).
pub fn fit_loglog_slope(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(param("slope fit needs at least two matched points"));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(param("slope fit needs positive finite values"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(param("slope fit needs distinct abscissae"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let se = if lx.len() > 2 {
        let ssr: f64 = lx
            .iter()
            .zip(&ly)
            .map(|(a, b)| {
                let r = b - (my + slope * (a - mx));
                r * r
            })
            .sum();
        (ssr / (m - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok((slope, se))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub d: usize,
    pub n_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub gamma0: f64,
    pub lambda0: f64,
    pub mode: Mode,
    /// Ridge only: `lambda = kappa * gamma^(2 / (2 - d))` when set.
    pub linked_kappa: Option<f64>,
    pub noise_sd: f64,
    pub test_size: usize,
    pub quad_level: u32,
    pub target_centers: usize,
    pub target_tau: f64,
    pub target_seed: u64,
    /// ERM only: `M = erm_bound_factor * |f*|_H`.
    pub erm_bound_factor: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            d: 3,
            n_grid: vec![256, 512, 1024, 2048, 4096],
            seeds: (0..5).collect(),
            gamma0: 1.0,
            lambda0: 1.0,
            mode: Mode::Ridge,
            linked_kappa: None,
            noise_sd: 0.5,
            test_size: 10_000,
            quad_level: 2,
            target_centers: 5,
            target_tau: 2.0,
            target_seed: 0,
            erm_bound_factor: 2.0,
        }
    }
}

impl ExperimentConfig {
    pub fn schedule(&self) -> Schedule {
        Schedule {
            gamma0: self.gamma0,
            lambda0: self.lambda0,
            mode: self.mode,
            d: self.d,
            linked_kappa: self.linked_kappa,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.n_grid[0] < 1 {
            return Err(param("n grid must be nonempty with n >= 1"));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(param("n grid must be strictly increasing"));
        }
        if self.seeds.is_empty() {
            return Err(param("need at least one seed"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(param(format!(
                "noise level must be non-negative, got {}",
                self.noise_sd
            )));
        }
        if self.test_size < 1000 {
            return Err(param("test size must be at least 1000"));
        }
        if self.mode == Mode::Erm && !(self.erm_bound_factor > 0.0) {
            return Err(param("ERM bound factor must be positive"));
        }
        schedule_params(&self.schedule(), self.n_grid[0]).map(|_| ())
    }

    /// Dataset seed of the `(n, seed)` cell; shared by ridge and ERM studies.
    pub fn data_seed(seed: u64, n: usize) -> u64 {
        derive_seed(seed, &[tag::COVARIATES, n as u64])
    }

    pub fn test_seed(seed: u64, n: usize) -> u64 {
        derive_seed(seed, &[tag::TEST, n as u64])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellResult {
    pub n: usize,
    pub seed: u64,
    pub gamma: f64,
    /// Ridge weight, or the active multiplier in ERM mode.
    pub lambda: f64,
    pub mse: f64,
    pub mse_std_error: f64,
    pub jitter: f64,
    pub fast_path_pairs: usize,
    #[serde(skip)]
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateStudyResult {
    pub target_energy: f64,
    /// ERM norm bound, `None` in ridge mode.
    pub norm_bound: Option<f64>,
    pub cells: Vec<CellResult>,
    pub n_grid: Vec<usize>,
    pub mean_mse: Vec<f64>,
    pub slope: f64,
    pub slope_std_error: f64,
    /// Slope of each seed's own MSE curve, in seed order.
    pub seed_slopes: Vec<(u64, f64)>,
}

/// Fits every `(n, seed)` cell and regresses the seed-averaged log MSE on
/// `log n`. Cells of one `n` run in parallel; grid sizes run in order.
pub fn run_rate_study(cfg: &ExperimentConfig) -> Result<RateStudyResult> {
    cfg.validate()?;
    let t = synth_target(cfg.d, cfg.target_centers, cfg.target_tau, cfg.target_seed)?;
    let kernel = EuclideanKernel::new(cfg.d)?;
    let q = sphere_quadrature(cfg.d, cfg.quad_level, cfg.target_seed)?;
    let norm_bound = (cfg.mode == Mode::Erm).then(|| cfg.erm_bound_factor * t.energy().sqrt());
    let schedule = cfg.schedule();

    let mut cells = Vec::with_capacity(cfg.n_grid.len() * cfg.seeds.len());
    for &n in &cfg.n_grid {
        let row: Vec<Result<CellResult>> = cfg
            .seeds
            .par_iter()
            .map(|&seed| {
                let start = Instant::now();
                let run = || -> Result<CellResult> {
                    let (gamma, lambda) = schedule_params(&schedule, n)?;
                    let ds = sample_dataset(&t, n, cfg.noise_sd, ExperimentConfig::data_seed(seed, n))?;
                    let g = assemble_gram(&kernel, ds.x(), gamma, &q)?;
                    let model = match norm_bound {
                        Some(m) => erm_fit_with_gram(&ds, &g, m)?,
                        None => fit_with_gram(&ds, &g, lambda)?,
                    };
                    let mse = mse_estimate(&model, &t, cfg.test_size, ExperimentConfig::test_seed(seed, n))?;
                    Ok(CellResult {
                        n,
                        seed,
                        gamma,
                        lambda: model.lambda,
                        mse: mse.value,
                        mse_std_error: mse.std_error,
                        jitter: model.applied_jitter,
                        fast_path_pairs: g.fast_path_count(),
                        wall_ms: 0.0,
                    })
                };
                run()
                    .map(|mut c| {
                        c.wall_ms = start.elapsed().as_secs_f64() * 1e3;
                        c
                    })
                    .map_err(|e| Error::Cell {
                        n,
                        seed,
                        source: Box::new(e),
                    })
            })
            .collect();
        for c in row {
            cells.push(c?);
        }
    }

    let s = cfg.seeds.len();
    let mean_mse: Vec<f64> = cells
        .chunks(s)
        .map(|row| row.iter().map(|c| c.mse).sum::<f64>() / s as f64)
        .collect();
    let ns: Vec<f64> = cfg.n_grid.iter().map(|&n| n as f64).collect();
    let (slope, slope_std_error) = if ns.len() >= 2 {
        fit_loglog_slope(&ns, &mean_mse)?
    } else {
        (f64::NAN, f64::NAN)
    };
    let seed_slopes = if ns.len() >= 2 {
        cfg.seeds
            .iter()
            .enumerate()
            .map(|(j, &seed)| {
                let ys: Vec<f64> = cells.chunks(s).map(|row| row[j].mse).collect();
                fit_loglog_slope(&ns, &ys).map(|(b, _)| (seed, b))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(RateStudyResult {
        target_energy: t.energy(),
        norm_bound,
        cells,
        n_grid: cfg.n_grid.clone(),
        mean_mse,
        slope,
        slope_std_error,
        seed_slopes,
    })
}

/// Bump profile `b(r) = (1 - r^2)^2` on `r < 1`, zero outside.
pub const BUMP_PROFILE: &str = "(1 - r^2)^2";
pub const ILLPOSED_POINTS: usize = 10;
/// Monte Carlo samples for the `L2` column, split evenly over the points.
pub const ILLPOSED_L2_SAMPLES: usize = 100_000;

fn bump(r: f64) -> f64 {
    if r < 1.0 {
        let s = 1.0 - r * r;
        s * s
    } else {
        0.0
    }
}

fn bump_slope(r: f64) -> f64 {
    if r < 1.0 {
        -4.0 * r * (1.0 - r * r)
    } else {
        0.0
    }
}

/// Area of the unit sphere in `R^d`.
pub fn unit_sphere_area(d: usize) -> f64 {
    use std::f64::consts::PI;
    match d {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI / (d as f64 - 2.0) * unit_sphere_area(d - 2),
    }
}

/// `int |grad b(|x| / h)|^2 dx` over `R^d` by Gauss-Legendre in the radius.
pub fn bump_energy(d: usize, h: f64) -> f64 {
    let (nodes, weights) = gauss_legendre(32);
    let half = 0.5 * h;
    let radial: f64 = nodes
        .iter()
        .zip(&weights)
        .map(|(t, w)| {
            let r = half * (t + 1.0);
            let g = bump_slope(r / h) / h;
            w * half * g * g * r.powi(d as i32 - 1)
        })
        .sum();
    unit_sphere_area(d) * radial
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IllposedRow {
    pub h: f64,
    /// `max_i |g_h(X_i) - Y_i|`.
    pub interpolation_error: f64,
    pub energy: f64,
    pub l2_norm: f64,
    pub l2_std_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IllposedResult {
    pub d: usize,
    pub profile: &'static str,
    /// `int |grad b|^2` for the unit-width bump.
    pub unit_energy: f64,
    pub min_separation: f64,
    pub rows: Vec<IllposedRow>,
    pub energy_exponent: f64,
}

/// The ten demo points and responses for `(d, seed)`.
pub fn illposed_data(d: usize, seed: u64) -> Result<Dataset> {
    if d < 3 {
        return Err(Error::Dimension(d));
    }
    let mut rng = stream(seed, &[tag::ILLPOSED, 0]);
    let coords: Vec<f64> = (0..ILLPOSED_POINTS * d).map(|_| rng.random::<f64>()).collect();
    let y: Vec<f64> = (0..ILLPOSED_POINTS).map(|_| rng.random_range(-1.0..=1.0)).collect();
    Dataset::new(PointSet::new(d, coords)?, y)
}

/// Points uniform in the unit ball, one batch per demo point, reused for
/// every width.
fn support_samples(d: usize, points: usize, seed: u64) -> Vec<Vec<f64>> {
    let per_point = ILLPOSED_L2_SAMPLES / points;
    (0..points)
        .map(|i| {
            let mut rng = stream(seed, &[tag::ILLPOSED, 2, i as u64]);
            let mut u = vec![0.0; d];
            let mut out = Vec::with_capacity(per_point * d);
            for _ in 0..per_point {
                sample_unit_sphere(&mut rng, &mut u);
                let r = rng.random::<f64>().powf(1.0 / d as f64);
                out.extend(u.iter().map(|v| r * v));
            }
            out
        })
        .collect()
}

/// `|g_h|^2_{L2(nu)}` and its standard error. The bumps are disjoint, so the
/// integral splits into one term per point, each estimated from uniform
/// samples of its support ball intersected with the cube.
fn bump_l2_sq(ds: &Dataset, support: &[Vec<f64>], h: f64) -> (f64, f64) {
    let d = ds.dim();
    let ball = unit_sphere_area(d) / d as f64 * h.powi(d as i32);
    let mut x = vec![0.0; d];
    let (mut value, mut var) = (0.0, 0.0);
    for (i, batch) in support.iter().enumerate() {
        let center = ds.x().row(i);
        let yi2 = ds.y()[i] * ds.y()[i];
        let mut m = Moments::default();
        for u in batch.chunks_exact(d) {
            for ((x, c), u) in x.iter_mut().zip(center).zip(u) {
                *x = c + h * u;
            }
            let inside = x.iter().all(|v| (0.0..=1.0).contains(v));
            let r = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            m.push(if inside { yi2 * ball * bump(r).powi(2) } else { 0.0 });
        }
        value += m.mean;
        var += m.std_error().powi(2);
    }
    (value, var.sqrt())
}

fn min_separation(x: &PointSet) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            m = m.min(distance(x.row(i), x.row(j)));
        }
    }
    m
}

/// Six halvings starting just below half the minimum separation.
pub fn default_widths(d: usize, seed: u64) -> Result<Vec<f64>> {
    let sep = min_separation(illposed_data(d, seed)?.x());
    Ok((0..6).map(|k| 0.45 * sep / 2f64.powi(k)).collect())
}

/// Interpolating bump sums `g_h = sum_i Y_i b(|x - X_i| / h)`: zero empirical
/// loss at every width while the energy scales like `h^(d-2)` and the `L2`
/// norm shrinks.
pub fn illposed_demo(d: usize, widths: &[f64], seed: u64) -> Result<IllposedResult> {
    let ds = illposed_data(d, seed)?;
    if widths.is_empty() || widths.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(param("widths must be positive"));
    }
    if widths.windows(2).any(|w| w[1] >= w[0]) {
        return Err(param("widths must be strictly decreasing"));
    }
    let sep = min_separation(ds.x());
    if let Some(h) = widths.iter().find(|&&h| h >= 0.5 * sep) {
        return Err(Error::Geometry(format!(
            "width {h} is not below half the minimum separation {}",
            0.5 * sep
        )));
    }
    let g = |x: &[f64], h: f64| -> f64 {
        (0..ds.len())
            .map(|i| ds.y()[i] * bump(distance(ds.x().row(i), x) / h))
            .sum()
    };
    let y2: f64 = ds.y().iter().map(|v| v * v).sum();
    let support = support_samples(d, ds.len(), seed);
    let mut rows = Vec::with_capacity(widths.len());
    for &h in widths {
        let interpolation_error = (0..ds.len())
            .map(|i| (g(ds.x().row(i), h) - ds.y()[i]).abs())
            .fold(0.0, f64::max);
        let (l2, l2_se) = bump_l2_sq(&ds, &support, h);
        rows.push(IllposedRow {
            h,
            interpolation_error,
            energy: y2 * bump_energy(d, h),
            l2_norm: l2.sqrt(),
            l2_std_error: if l2 > 0.0 { 0.5 * l2_se / l2.sqrt() } else { 0.0 },
        });
    }
    let energy_exponent = if rows.len() >= 2 {
        let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
        let es: Vec<f64> = rows.iter().map(|r| r.energy).collect();
        fit_loglog_slope(&hs, &es)?.0
    } else {
        f64::NAN
    };
    Ok(IllposedResult {
        d,
        profile: BUMP_PROFILE,
        unit_energy: bump_energy(d, 1.0),
        min_separation: sep,
        rows,
        energy_exponent,
    })
}
