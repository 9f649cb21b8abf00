//! Green functions and the geometry of their level sets.
//!
//! The only concrete kernel is the free-space Euclidean one,
//! `G(x, y) = c(d) |x - y|^(2 - d)` with `c(d) = Gamma(d/2 - 1) / (2 pi^(d/2))`.
//! Other transient spaces plug in through [`GreenKernel`]: a kernel that only
//! knows its radial profile gets a bisection-based [`GreenKernel::level_radius`]
//! for free.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::points::{check_dim, distance};

/// Constants of the underlying Dirichlet space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceParams {
    /// Ambient dimension `d`, which is also the volume exponent.
    pub dimension: usize,
    /// Walk dimension; 2 for Brownian motion.
    pub walk_exponent: f64,
    /// Normalizing constant of the Green function.
    pub green_constant: f64,
}

impl SpaceParams {
    pub fn euclidean(d: usize) -> Result<Self> {
        Ok(Self {
            dimension: d,
            walk_exponent: 2.0,
            green_constant: green_constant(d)?,
        })
    }

    /// Volume-growth exponent.
    pub fn volume_exponent(&self) -> f64 {
        self.dimension as f64
    }
}

/// `Gamma(d/2 - 1) / (2 pi^(d/2))`.
///
/// Both gamma and the power of pi are built by exact recurrences from
/// `Gamma(1) = 1` and `Gamma(1/2) = sqrt(pi)`, so the result is accurate to a
/// few ulps.
pub fn green_constant(d: usize) -> Result<f64> {
    if d < 3 {
        return Err(Error::Dimension(d));
    }
    let sqrt_pi = PI.sqrt();
    // Gamma(d/2 - 1), walking up from Gamma(1) or Gamma(1/2).
    let (mut x, mut gamma) = if d.is_multiple_of(2) {
        (1.0, 1.0)
    } else {
        (0.5, sqrt_pi)
    };
    let target = d as f64 / 2.0 - 1.0;
    while x < target {
        gamma *= x;
        x += 1.0;
    }
    let pi_pow = PI.powi((d / 2) as i32) * if d % 2 == 1 { sqrt_pi } else { 1.0 };
    Ok(gamma / (2.0 * pi_pow))
}

pub trait GreenKernel: Send + Sync {
    fn params(&self) -> &SpaceParams;

    fn dim(&self) -> usize {
        self.params().dimension
    }

    /// Green function as a function of distance; `+inf` at `r = 0`.
    fn radial(&self, r: f64) -> f64;

    /// Radius `R` of the level set `{G >= gamma}`.
    fn level_radius(&self, gamma: f64) -> Result<f64> {
        check_threshold(gamma)?;
        bisect_level_radius(|r| self.radial(r), gamma)
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x, "x")?;
        check_dim(self.dim(), y, "y")?;
        Ok(self.radial(distance(x, y)))
    }

    /// `min(G(x, y), gamma)`, which is finite on the diagonal.
    fn truncated_eval(&self, x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
        check_threshold(gamma)?;
        Ok(self.eval(x, y)?.min(gamma))
    }

    /// Unchecked `min(G, gamma)` at distance `r`, for inner loops.
    #[inline]
    fn truncated_radial(&self, r: f64, gamma: f64) -> f64 {
        self.radial(r).min(gamma)
    }
}

pub(crate) fn check_threshold(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(param(format!("threshold must be positive and finite, got {gamma}")));
    }
    Ok(())
}

/// Solves `profile(r) = gamma` for a strictly decreasing profile.
fn bisect_level_radius(profile: impl Fn(f64) -> f64, gamma: f64) -> Result<f64> {
    let mut hi = 1.0_f64;
    while profile(hi) > gamma {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Convergence(format!("level set {{G >= {gamma}}} is unbounded")));
        }
    }
    let mut lo = hi;
    while profile(lo) < gamma {
        lo /= 2.0;
        if lo == 0.0 {
            return Err(Error::Convergence(format!("level set {{G >= {gamma}}} is empty")));
        }
    }
    if lo == hi {
        return Ok(hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if profile(mid) >= gamma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The Newtonian kernel of `H^1_0(R^d)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EuclideanKernel {
    params: SpaceParams,
}

impl EuclideanKernel {
    pub fn new(d: usize) -> Result<Self> {
        Ok(Self {
            params: SpaceParams::euclidean(d)?,
        })
    }

    pub fn from_params(params: SpaceParams) -> Result<Self> {
        let expected = SpaceParams::euclidean(params.dimension)?;
        if params != expected {
            return Err(param(format!(
                "space constants {params:?} do not match the Euclidean kernel {expected:?}"
            )));
        }
        Ok(Self { params })
    }
}

impl GreenKernel for EuclideanKernel {
    fn params(&self) -> &SpaceParams {
        &self.params
    }

    #[inline]
    fn radial(&self, r: f64) -> f64 {
        if r == 0.0 {
            return f64::INFINITY;
        }
        let e = self.params.dimension as i32 - 2;
        self.params.green_constant / r.powi(e)
    }

    fn level_radius(&self, gamma: f64) -> Result<f64> {
        check_threshold(gamma)?;
        let ratio = self.params.green_constant / gamma;
        Ok(match self.params.dimension {
            3 => ratio,
            4 => ratio.sqrt(),
            d => ratio.powf(1.0 / (d as f64 - 2.0)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn constants_match_closed_forms() {
        assert!(rel(green_constant(3).unwrap(), 1.0 / (2.0 * PI)) < 1e-15);
        assert!(rel(green_constant(4).unwrap(), 1.0 / (2.0 * PI * PI)) < 1e-15);
        // Gamma(3/2) = sqrt(pi)/2, so c(5) = 1 / (4 pi^2).
        assert!(rel(green_constant(5).unwrap(), 1.0 / (4.0 * PI * PI)) < 1e-15);
        // Gamma(2) = 1, so c(6) = 1 / (2 pi^3).
        assert!(rel(green_constant(6).unwrap(), 1.0 / (2.0 * PI.powi(3))) < 1e-15);
        assert!((green_constant(3).unwrap() - 0.159154943).abs() < 1e-9);
        assert!((green_constant(4).unwrap() - 0.050660592).abs() < 1e-9);
    }

    #[test]
    fn low_dimensions_are_rejected() {
        assert!(matches!(green_constant(2), Err(Error::Dimension(2))));
        assert!(matches!(EuclideanKernel::new(1), Err(Error::Dimension(1))));
    }

    #[test]
    fn eval_examples() {
        let k = EuclideanKernel::new(3).unwrap();
        let x = [0.0, 0.0, 0.0];
        assert!(rel(k.eval(&x, &[1.0, 0.0, 0.0]).unwrap(), 0.1591549430918953) < 1e-14);
        assert!(rel(k.eval(&x, &[0.0, 0.5, 0.0]).unwrap(), 1.0 / PI) < 1e-14);
        assert_eq!(k.eval(&x, &x).unwrap(), f64::INFINITY);
        assert!(matches!(k.eval(&x, &[1.0, 0.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn level_radius_examples() {
        let k3 = EuclideanKernel::new(3).unwrap();
        let c3 = k3.params().green_constant;
        assert!(rel(k3.level_radius(c3).unwrap(), 1.0) < 1e-15);
        assert!(rel(k3.level_radius(2.0 * c3).unwrap(), 0.5) < 1e-15);
        let k4 = EuclideanKernel::new(4).unwrap();
        assert!(rel(k4.level_radius(k4.params().green_constant).unwrap(), 1.0) < 1e-15);
        assert!(matches!(k3.level_radius(0.0), Err(Error::Param(_))));
        assert!(matches!(k3.level_radius(-1.0), Err(Error::Param(_))));
    }

    #[test]
    fn truncated_examples() {
        let k = EuclideanKernel::new(3).unwrap();
        let x = [0.0, 0.0, 0.0];
        let y = [0.0, 0.0, 1.0];
        assert_eq!(k.truncated_eval(&x, &y, 0.1).unwrap(), 0.1);
        assert_eq!(k.truncated_eval(&x, &x, 5.0).unwrap(), 5.0);
        assert!(rel(k.truncated_eval(&x, &y, 1.0).unwrap(), 0.1591549430918953) < 1e-14);
    }

    /// A radial-only kernel exercising the default bisection path.
    struct ProfileOnly(SpaceParams);

    impl GreenKernel for ProfileOnly {
        fn params(&self) -> &SpaceParams {
            &self.0
        }
        fn radial(&self, r: f64) -> f64 {
            self.0.green_constant / r.powi(self.0.dimension as i32 - 2)
        }
    }

    #[test]
    fn bisection_matches_closed_form() {
        for d in 3..=6 {
            let k = EuclideanKernel::new(d).unwrap();
            let generic = ProfileOnly(*k.params());
            for gamma in [1e-3, 0.07, 1.0, 42.0, 1e5] {
                let a = k.level_radius(gamma).unwrap();
                let b = generic.level_radius(gamma).unwrap();
                assert!(rel(b, a) < 1e-13, "d={d} gamma={gamma}: {a} vs {b}");
            }
        }
    }

    proptest! {
        #[test]
        fn level_radius_round_trips(d in 3usize..8, log_gamma in -8.0f64..8.0) {
            let k = EuclideanKernel::new(d).unwrap();
            let gamma = log_gamma.exp();
            let r = k.level_radius(gamma).unwrap();
            prop_assert!(rel(k.radial(r), gamma) < 1e-12);
        }

        #[test]
        fn truncation_is_symmetric_monotone_and_bounded(
            x in prop::array::uniform3(-1.0f64..1.0),
            y in prop::array::uniform3(-1.0f64..1.0),
            s in 1.0f64..3.0,
            gamma in 0.01f64..50.0,
            g2 in 1.0f64..4.0,
        ) {
            let k = EuclideanKernel::new(3).unwrap();
            let a = k.truncated_eval(&x, &y, gamma).unwrap();
            prop_assert_eq!(a, k.truncated_eval(&y, &x, gamma).unwrap());
            prop_assert!(a > 0.0 && a <= gamma);
            // Push y further from x along the same ray.
            let far: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + s * (b - a)).collect();
            prop_assert!(k.truncated_eval(&x, &far, gamma).unwrap() <= a);
            prop_assert!(k.truncated_eval(&x, &y, gamma * g2).unwrap() >= a);
        }
    }
}
