//! Independent numerical oracles.
//!
//! Monte Carlo estimators here split their samples into fixed-size blocks,
//! each drawn from its own stream `(seed, tag, block)`, and combine block
//! statistics in a fixed pairwise tree, so estimates are bit-identical for
//! any worker count.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::experiments::{fit_loglog_slope, SyntheticTarget};
use crate::gram::{gram_entry, gram_entry_by_quadrature};
use crate::kernel::{EuclideanKernel, GreenKernel};
use crate::linalg::CompensatedSum;
use crate::obstacle::{make_obstacle, Obstacle};
use crate::points::{check_dim, distance};
use crate::rng::{stream, tag};
use crate::sphere::{sample_unit_sphere, sphere_quadrature, SphereQuadrature};

/// Samples per Monte Carlo block.
pub const MC_BLOCK_SIZE: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Running `(count, mean, M2)` with Chan's pairwise merge.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Moments {
    pub count: f64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub(crate) fn push(&mut self, v: f64) {
        self.count += 1.0;
        let delta = v - self.mean;
        self.mean += delta / self.count;
        self.m2 += delta * (v - self.mean);
    }

    pub(crate) fn merge(a: Self, b: Self) -> Self {
        if a.count == 0.0 {
            return b;
        }
        if b.count == 0.0 {
            return a;
        }
        let count = a.count + b.count;
        let delta = b.mean - a.mean;
        Self {
            count,
            mean: a.mean + delta * (b.count / count),
            m2: a.m2 + b.m2 + delta * delta * (a.count * b.count / count),
        }
    }

    /// Standard error of the mean.
    pub(crate) fn std_error(&self) -> f64 {
        if self.count < 2.0 {
            return 0.0;
        }
        (self.m2 / (self.count - 1.0) / self.count).max(0.0).sqrt()
    }
}

/// Pairwise tree reduction in index order.
pub(crate) fn tree_reduce<T: Copy>(items: &[T], merge: &impl Fn(T, T) -> T) -> Option<T> {
    match items.len() {
        0 => None,
        1 => Some(items[0]),
        n => {
            let (l, r) = items.split_at(n / 2);
            Some(merge(tree_reduce(l, merge)?, tree_reduce(r, merge)?))
        }
    }
}

/// Evaluates `block(b, start, len)` for every block of `samples` in parallel
/// and returns the per-block results in block order.
pub(crate) fn blocks<T: Send>(samples: usize, block: impl Fn(u64, usize, usize) -> T + Sync) -> Vec<T> {
    let nblocks = samples.div_ceil(MC_BLOCK_SIZE);
    (0..nblocks)
        .into_par_iter()
        .map(|b| {
            let start = b * MC_BLOCK_SIZE;
            block(b as u64, start, MC_BLOCK_SIZE.min(samples - start))
        })
        .collect()
}

/// Mean of `h` over the sphere `|y - center| = radius` by plain Monte Carlo.
pub fn mc_sphere_mean(
    center: &[f64],
    radius: f64,
    h: impl Fn(&[f64]) -> f64 + Sync,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if samples < 100 {
        return Err(param(format!("need at least 100 samples, got {samples}")));
    }
    if center.is_empty() || !(radius >= 0.0 && radius.is_finite()) {
        return Err(param("sphere needs a nonempty center and a finite radius"));
    }
    let d = center.len();
    let per_block = blocks(samples, |b, _, len| {
        let mut rng = stream(seed, &[tag::MC_BLOCK, b]);
        let mut u = vec![0.0; d];
        let mut y = vec![0.0; d];
        let mut m = Moments::default();
        for _ in 0..len {
            sample_unit_sphere(&mut rng, &mut u);
            for ((y, c), u) in y.iter_mut().zip(center).zip(&u) {
                *y = c + radius * u;
            }
            m.push(h(&y));
        }
        m
    });
    let m = tree_reduce(&per_block, &Moments::merge).expect("samples >= 100");
    Ok(McEstimate {
        value: m.mean,
        std_error: m.std_error(),
        samples,
        seed,
    })
}

/// Mean of `f` under the uniform distribution on `[0, 1]^d`, with sample
/// blocks drawn from streams `(seed, stream_tag, block)`.
pub fn mc_cube_mean(
    d: usize,
    samples: usize,
    seed: u64,
    stream_tag: u64,
    f: impl Fn(&[f64]) -> f64 + Sync,
) -> Result<McEstimate> {
    let m = cube_moments(d, samples, seed, stream_tag, |x| [f(x)])?[0];
    Ok(McEstimate {
        value: m.mean,
        std_error: m.std_error(),
        samples,
        seed,
    })
}

/// Joint moments of several integrands on the same uniform samples.
pub(crate) fn cube_moments<const K: usize>(
    d: usize,
    samples: usize,
    seed: u64,
    stream_tag: u64,
    f: impl Fn(&[f64]) -> [f64; K] + Sync,
) -> Result<[Moments; K]> {
    use rand::Rng;
    if samples == 0 || d == 0 {
        return Err(param("need a positive dimension and sample count"));
    }
    let per_block = blocks(samples, |b, _, len| {
        let mut rng = stream(seed, &[stream_tag, b]);
        let mut x = vec![0.0; d];
        let mut m = [Moments::default(); K];
        for _ in 0..len {
            x.iter_mut().for_each(|v| *v = rng.random::<f64>());
            for (m, v) in m.iter_mut().zip(f(&x)) {
                m.push(v);
            }
        }
        m
    });
    Ok(tree_reduce(&per_block, &|a: [Moments; K], b: [Moments; K]| {
        std::array::from_fn(|i| Moments::merge(a[i], b[i]))
    })
    .expect("at least one block"))
}

/// Average of `h` over the sphere `|z - center| = radius` under `q`.
pub fn sphere_average(q: &SphereQuadrature, center: &[f64], radius: f64, mut h: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut z = vec![0.0; center.len()];
    let mut acc = CompensatedSum::default();
    for (w, u) in q.iter() {
        for ((z, c), u) in z.iter_mut().zip(center).zip(u) {
            *z = c + radius * u;
        }
        acc.add(w * h(&z));
    }
    acc.value()
}

/// `|mean of gamma e_x over dB(y, rho) - gamma e_x(y)|`, which vanishes
/// because `gamma e_x = G(x, .)` is harmonic off the obstacle.
pub fn harmonicity_residual<K: GreenKernel + ?Sized>(
    k: &K,
    o: &Obstacle,
    y: &[f64],
    rho: f64,
    q: &SphereQuadrature,
) -> Result<f64> {
    check_dim(k.dim(), y, "y")?;
    check_dim(k.dim(), q.node(0), "quadrature node")?;
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(param(format!("radius must be non-negative, got {rho}")));
    }
    let s = distance(o.center(), y);
    if !(s > o.radius() + rho) {
        return Err(Error::Geometry(format!(
            "ball of radius {rho} at distance {s} meets the obstacle of radius {}",
            o.radius()
        )));
    }
    if rho == 0.0 {
        return Ok(0.0);
    }
    let gamma = o.threshold();
    let pot = |z: &[f64]| k.truncated_radial(distance(o.center(), z), gamma);
    let mean = sphere_average(q, y, rho, pot);
    Ok((mean - pot(y)).abs())
}

/// Result of a Poincaré-type Monte Carlo ratio.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatioEstimate {
    pub ratio: f64,
    pub std_error: f64,
    pub samples: usize,
    /// Set when the denominator vanishes; the ratio is then reported as 0.
    pub degenerate: bool,
}

/// `P_x^gamma g` for a target `g`: a sum of spherical means over
/// `dB(x, R(gamma))`, using the mean-value property whenever the sphere
/// misses the target's own obstacles.
pub fn target_capacitary_mean(
    k: &EuclideanKernel,
    t: &SyntheticTarget,
    x: &[f64],
    gamma: f64,
    q: &SphereQuadrature,
) -> Result<f64> {
    let radius = k.level_radius(gamma)?;
    let reach = radius + k.level_radius(t.tau())?;
    let mut acc = 0.0;
    for (j, a) in t.coeffs().iter().enumerate() {
        let z = t.centers().row(j);
        let s = distance(z, x);
        acc += a * if s >= reach * (1.0 + crate::gram::SEPARATION_MARGIN) {
            k.radial(s)
        } else {
            sphere_average(q, x, radius, |y| k.truncated_radial(distance(z, y), t.tau()))
        };
    }
    Ok(acc)
}

fn check_target(k: &EuclideanKernel, t: &SyntheticTarget, samples: usize) -> Result<()> {
    if t.centers().dim() != k.dim() {
        return Err(crate::error::shape("target and kernel dimensions differ"));
    }
    if samples < 1000 {
        return Err(param(format!("need at least 1000 samples, got {samples}")));
    }
    Ok(())
}

/// `int (g - P_x^gamma g)^2 dnu / E(g, g)` with `nu` uniform on the unit cube,
/// estimated from `samples` points of the stream family `seed`.
pub fn poincare_ratio(
    k: &EuclideanKernel,
    t: &SyntheticTarget,
    gamma: f64,
    samples: usize,
    seed: u64,
    q: &SphereQuadrature,
) -> Result<RatioEstimate> {
    check_target(k, t, samples)?;
    let energy = t.energy();
    let err = std::sync::Mutex::new(None);
    let [m] = cube_moments(k.dim(), samples, seed, tag::CHECK, |x| {
        let g = t.eval(x);
        match target_capacitary_mean(k, t, x, gamma, q) {
            Ok(p) => [(g - p) * (g - p)],
            Err(e) => {
                err.lock().expect("poisoned").get_or_insert(e);
                [f64::NAN]
            }
        }
    })?;
    if let Some(e) = err.into_inner().expect("poisoned") {
        return Err(e);
    }
    Ok(ratio(m.mean, m.std_error(), energy, samples))
}

fn ratio(num: f64, se: f64, den: f64, samples: usize) -> RatioEstimate {
    if !(den > 0.0) {
        return RatioEstimate {
            ratio: 0.0,
            std_error: 0.0,
            samples,
            degenerate: true,
        };
    }
    RatioEstimate {
        ratio: num / den,
        std_error: se / den,
        samples,
        degenerate: false,
    }
}

/// `int (P_x^gamma g)^2 dnu / (gamma^(2/(2-d)) E(g, g) + |g|^2_{L2(nu)})`,
/// numerator and the `L2` term from the same samples.
pub fn second_moment_ratio(
    k: &EuclideanKernel,
    t: &SyntheticTarget,
    gamma: f64,
    samples: usize,
    seed: u64,
    q: &SphereQuadrature,
) -> Result<RatioEstimate> {
    check_target(k, t, samples)?;
    let err = std::sync::Mutex::new(None);
    let [p2, g2] = cube_moments(k.dim(), samples, seed, tag::CHECK, |x| {
        let g = t.eval(x);
        match target_capacitary_mean(k, t, x, gamma, q) {
            Ok(p) => [p * p, g * g],
            Err(e) => {
                err.lock().expect("poisoned").get_or_insert(e);
                [f64::NAN; 2]
            }
        }
    })?;
    if let Some(e) = err.into_inner().expect("poisoned") {
        return Err(e);
    }
    let d = k.dim() as f64;
    let den = gamma.powf(2.0 / (2.0 - d)) * t.energy() + g2.mean;
    Ok(ratio(p2.mean, p2.std_error(), den, samples))
}

/// Configuration of the Poincaré scaling check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PoincareStudy {
    pub d: usize,
    pub tau: f64,
    pub centers: usize,
    pub gamma_bar: f64,
    pub gamma_multipliers: Vec<f64>,
    pub samples: usize,
    pub seeds: Vec<u64>,
    pub quad_level: u32,
}

impl Default for PoincareStudy {
    fn default() -> Self {
        Self {
            d: 3,
            tau: 2.0,
            centers: 5,
            gamma_bar: 8.0,
            gamma_multipliers: vec![1.0, 2.0, 4.0, 8.0],
            samples: 10_000,
            seeds: (0..5).collect(),
            quad_level: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PoincareStudyResult {
    pub gammas: Vec<f64>,
    /// Seed-averaged ratio per threshold.
    pub mean_ratios: Vec<f64>,
    pub slope: f64,
    pub slope_std_error: f64,
}

/// Regresses the seed-averaged log Poincaré ratio on `log gamma`. The target
/// is fixed by `target_seed`; each study seed draws its own uniform samples,
/// shared across thresholds.
pub fn poincare_study(cfg: &PoincareStudy, target_seed: u64) -> Result<PoincareStudyResult> {
    let k = EuclideanKernel::new(cfg.d)?;
    let t = crate::experiments::synth_target(cfg.d, cfg.centers, cfg.tau, target_seed)?;
    let q = sphere_quadrature(cfg.d, cfg.quad_level, target_seed)?;
    let gammas: Vec<f64> = cfg.gamma_multipliers.iter().map(|m| m * cfg.gamma_bar).collect();
    let mut mean_ratios = Vec::with_capacity(gammas.len());
    for &gamma in &gammas {
        let mut acc = 0.0;
        for &seed in &cfg.seeds {
            let r = poincare_ratio(&k, &t, gamma, cfg.samples, seed, &q)?;
            if r.degenerate || !(r.ratio > 0.0) {
                return Err(Error::Geometry(format!(
                    "Poincaré ratio at gamma = {gamma}, seed {seed} is {} (no samples near the target's obstacles)",
                    r.ratio
                )));
            }
            acc += r.ratio;
        }
        mean_ratios.push(acc / cfg.seeds.len() as f64);
    }
    let (slope, slope_std_error) = fit_loglog_slope(&gammas, &mean_ratios)?;
    Ok(PoincareStudyResult {
        gammas,
        mean_ratios,
        slope,
        slope_std_error,
    })
}

/// One line of the invariant suite.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckItem {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub seed: u64,
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }

    fn push_at_most(&mut self, name: &str, measured: f64, threshold: f64) {
        self.items.push(CheckItem {
            name: name.into(),
            measured,
            threshold,
            passed: measured <= threshold,
        });
    }
}

/// Largest relative harmonicity residual over `cases` random geometries in
/// dimension 3 with the level-`level` rule. Ball radii are at most half the
/// clearance to the obstacle.
pub fn harmonicity_sweep(cases: usize, level: u32, seed: u64) -> Result<f64> {
    use rand::Rng;
    let k = EuclideanKernel::new(3)?;
    let q = sphere_quadrature(3, level, seed)?;
    let mut rng = stream(seed, &[tag::CHECK, 1]);
    let mut worst: f64 = 0.0;
    let mut dir = [0.0; 3];
    for _ in 0..cases {
        let gamma = 10f64.powf(rng.random_range(-1.0..1.5));
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let o = make_obstacle(&k, &x, gamma)?;
        let s = o.radius() * rng.random_range(1.05..6.0);
        sample_unit_sphere(&mut rng, &mut dir);
        let y: Vec<f64> = x.iter().zip(&dir).map(|(x, u)| x + s * u).collect();
        let rho = 0.5 * (s - o.radius()) * rng.random_range(0.01..1.0);
        let r = harmonicity_residual(&k, &o, &y, rho, &q)?;
        worst = worst.max(r / (gamma * o.equilibrium_potential(&k, &y)?));
    }
    Ok(worst)
}

/// Runs the invariant suite: potential identities, harmonicity, sphere
/// rules against Monte Carlo, the Gram fast path, and Poincaré scaling.
pub fn run_check_suite(seed: u64) -> Result<CheckReport> {
    use rand::Rng;
    let mut report = CheckReport {
        seed,
        items: Vec::new(),
    };

    let mut worst: f64 = 0.0;
    for d in [3usize, 4, 5] {
        let k = EuclideanKernel::new(d)?;
        let o = make_obstacle(&k, &vec![0.0; d], 2.5)?;
        for i in 0..200 {
            let r = o.radius() * (0.01 + 0.05 * i as f64);
            let mut y = vec![0.0; d];
            y[0] = r;
            let expected = (o.radius() / r).powi(d as i32 - 2).min(1.0);
            worst = worst.max((o.equilibrium_potential(&k, &y)? - expected).abs());
        }
    }
    report.push_at_most("equilibrium potential = (R/r)^(d-2) ^ 1", worst, 1e-12);

    let mut worst: f64 = 0.0;
    for d in [3usize, 4, 5] {
        for level in 1..=3 {
            let q = sphere_quadrature(d, level, seed)?;
            worst = worst.max((sphere_average(&q, &vec![0.3; d], 0.7, |_| 1.0) - 1.0).abs());
        }
    }
    report.push_at_most("capacitary mean of 1", worst, 1e-14);

    report.push_at_most(
        "harmonicity residual (relative, 100 cases)",
        harmonicity_sweep(100, 3, seed)?,
        1e-8,
    );

    let k = EuclideanKernel::new(3)?;
    let q2 = sphere_quadrature(3, 2, seed)?;
    let mut rng = stream(seed, &[tag::CHECK, 2]);
    let mut worst: f64 = 0.0;
    let mut dir = [0.0; 3];
    for _ in 0..1000 {
        let gamma = 10f64.powf(rng.random_range(-0.5..1.5));
        let radius = k.level_radius(gamma)?;
        let xi: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
        sample_unit_sphere(&mut rng, &mut dir);
        let s = 2.0 * radius * (1.0 + 1e-9) * rng.random_range(1.0..5.0);
        let xj: Vec<f64> = xi.iter().zip(&dir).map(|(x, u)| x + s * u).collect();
        let fast = gram_entry(&k, &xi, &xj, gamma, &q2)?;
        let slow = gram_entry_by_quadrature(&k, &xi, &xj, gamma, &q2)?;
        worst = worst.max(((fast - slow) / fast).abs());
    }
    report.push_at_most("Gram fast path vs quadrature (relative, 1000 pairs)", worst, 1e-6);

    let q3 = sphere_quadrature(3, 3, seed)?;
    let mut worst_z: f64 = 0.0;
    for case in 0..100u64 {
        let gamma = 10f64.powf(rng.random_range(-0.5..1.0));
        let x: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
        let o = make_obstacle(&k, &x, gamma)?;
        let z: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
        let tz = 10f64.powf(rng.random_range(-0.5..1.0));
        let h = |y: &[f64]| k.truncated_radial(distance(&z, y), tz) + y[0] * y[1];
        let det = o.spherical_mean(&q3, h)?;
        let mc = mc_sphere_mean(
            &x,
            o.radius(),
            h,
            20_000,
            crate::rng::derive_seed(seed, &[tag::CHECK, 3, case]),
        )?;
        if mc.std_error > 0.0 {
            worst_z = worst_z.max((det - mc.value).abs() / mc.std_error);
        }
    }
    report.push_at_most("sphere rule vs Monte Carlo (max |z|, 100 cases)", worst_z, 4.0);

    let study = poincare_study(&PoincareStudy::default(), seed)?;
    report.push_at_most("Poincaré ratio log-log slope in gamma", study.slope, -1.7);

    Ok(report)
}
