//! Probability quadratures on the unit sphere `S^(d-1)`.
//!
//! For `d = 3` the rule is deterministic: Gauss-Legendre in `t = cos(theta)`
//! times an equispaced azimuth grid. Because the uniform measure on `S^2`
//! pushes forward to the uniform measure on `t in [-1, 1]`, the product rule
//! with `nt` latitudes and `nphi` azimuths integrates every spherical harmonic
//! of degree `<= min(2 nt - 1, nphi - 1)` exactly. Node counts are
//! `100 * 4^(level - 1)`; the factorization of that count into `nt * nphi`
//! is the one with the highest exactness degree.
//!
//! For `d > 3` the rule is Monte Carlo: `1000 * 4^(level - 1)` normalized
//! Gaussian directions drawn in antithetic pairs `(u, -u)`, so odd moments
//! vanish exactly.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::linalg::CompensatedSum;
use crate::rng::{self, tag};

const MAX_LEVEL: u32 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuadratureMode {
    Deterministic,
    MonteCarlo { seed: u64 },
}

/// Unit directions with probability weights.
#[derive(Clone, Debug)]
pub struct SphereQuadrature {
    dim: usize,
    level: u32,
    mode: QuadratureMode,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    exact_degree: Option<usize>,
}

/// The default rule for dimension `d` at refinement `level`.
pub fn sphere_quadrature(d: usize, level: u32, seed: u64) -> Result<SphereQuadrature> {
    SphereQuadrature::new(d, level, seed)
}

impl SphereQuadrature {
    pub fn new(d: usize, level: u32, seed: u64) -> Result<Self> {
        if level < 1 {
            return Err(param("quadrature level must be at least 1"));
        }
        if level > MAX_LEVEL {
            return Err(param(format!("quadrature level {level} exceeds {MAX_LEVEL}")));
        }
        if d < 3 {
            return Err(crate::Error::Dimension(d));
        }
        let scale = 4usize.pow(level - 1);
        let mut q = if d == 3 {
            let (nt, nphi) = best_product_split(100 * scale);
            Self::product_rule(nt, nphi)
        } else {
            Self::monte_carlo(
                d,
                1000 * scale,
                rng::derive_seed(seed, &[tag::SPHERE_NODES, level as u64]),
            )?
        };
        q.level = level;
        if let QuadratureMode::MonteCarlo { .. } = q.mode {
            q.mode = QuadratureMode::MonteCarlo { seed };
        }
        Ok(q)
    }

    /// Gauss-Legendre (in `cos theta`) by equispaced azimuth rule on `S^2`.
    pub fn product_rule(nt: usize, nphi: usize) -> Self {
        assert!(nt >= 1 && nphi >= 1, "product rule needs at least one node per axis");
        let (ts, tw) = gauss_legendre(nt);
        let mut nodes = Vec::with_capacity(3 * nt * nphi);
        let mut weights = Vec::with_capacity(nt * nphi);
        for (&t, &w) in ts.iter().zip(&tw) {
            let s = (1.0 - t * t).max(0.0).sqrt();
            for k in 0..nphi {
                let phi = 2.0 * PI * (k as f64 + 0.5) / nphi as f64;
                nodes.extend_from_slice(&[s * phi.cos(), s * phi.sin(), t]);
                // Legendre weights sum to 2 on [-1, 1].
                weights.push(0.5 * w / nphi as f64);
            }
        }
        normalize(&mut weights);
        Self {
            dim: 3,
            level: 0,
            mode: QuadratureMode::Deterministic,
            nodes,
            weights,
            exact_degree: Some((2 * nt - 1).min(nphi - 1)),
        }
    }

    /// `count` uniform directions (rounded up to even) in antithetic pairs.
    pub fn monte_carlo(d: usize, count: usize, seed: u64) -> Result<Self> {
        if count < 2 {
            return Err(param("Monte Carlo sphere rule needs at least 2 nodes"));
        }
        let pairs = count.div_ceil(2);
        let mut rng = rng::stream(seed, &[tag::SPHERE_NODES, d as u64]);
        let mut nodes = Vec::with_capacity(2 * pairs * d);
        let mut u = vec![0.0; d];
        for _ in 0..pairs {
            sample_unit_sphere(&mut rng, &mut u);
            nodes.extend_from_slice(&u);
            nodes.extend(u.iter().map(|v| -v));
        }
        let m = 2 * pairs;
        Ok(Self {
            dim: d,
            level: 0,
            mode: QuadratureMode::MonteCarlo { seed },
            nodes,
            weights: vec![1.0 / m as f64; m],
            exact_degree: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn mode(&self) -> QuadratureMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Highest spherical-harmonic degree integrated exactly, if any.
    pub fn exact_degree(&self) -> Option<usize> {
        self.exact_degree
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    /// `(weight, direction)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        self.weights.iter().copied().zip(self.nodes.chunks_exact(self.dim))
    }

    /// Stable text identifying the rule, used in cache keys.
    pub fn descriptor(&self) -> String {
        match self.mode {
            QuadratureMode::Deterministic => format!("det:d{}:n{}", self.dim, self.len()),
            QuadratureMode::MonteCarlo { seed } => {
                format!("mc:d{}:n{}:s{seed}", self.dim, self.len())
            }
        }
    }
}

/// Splits `n` into `nt * nphi` maximizing `min(2 nt - 1, nphi - 1)`.
/// Ties go to an even `nphi` (antipodal symmetry), then to more azimuths.
fn best_product_split(n: usize) -> (usize, usize) {
    (1..=n)
        .filter(|&nt| n.is_multiple_of(nt))
        .map(|nt| (nt, n / nt))
        .max_by_key(|&(nt, nphi)| ((2 * nt - 1).min(nphi - 1), nphi % 2 == 0, nphi))
        .expect("n >= 1 has at least one divisor")
}

fn normalize(w: &mut [f64]) {
    let mut acc = CompensatedSum::default();
    w.iter().for_each(|&v| acc.add(v));
    let s = acc.value();
    w.iter_mut().for_each(|v| *v /= s);
}

/// Fills `out` with a uniform direction on the unit sphere.
pub fn sample_unit_sphere<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    loop {
        let mut norm2 = 0.0;
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
            norm2 += *v * *v;
        }
        if norm2 > 1e-300 {
            let inv = norm2.sqrt().recip();
            out.iter_mut().for_each(|v| *v *= inv);
            return;
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}
