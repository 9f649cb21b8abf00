//! Green level-set obstacles and their equilibrium data.
//!
//! For a threshold `gamma` the obstacle around `x` is `{y : G(x, y) >= gamma}`,
//! a ball of radius `R = level_radius(gamma)`. Its equilibrium potential is
//! `min(G(x, .), gamma) / gamma` and its equilibrium measure is the uniform
//! measure on the sphere `|y - x| = R` scaled to total mass `1 / gamma`.
//! The capacitary mean of `h` is the normalized integral of `h` against that
//! measure, i.e. the uniform spherical average of `h` over the boundary.

use crate::error::Result;
use crate::kernel::{check_threshold, GreenKernel};
use crate::linalg::CompensatedSum;
use crate::points::{check_dim, distance};
use crate::sphere::SphereQuadrature;

/// Boundary measure of an obstacle: uniform on a sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquilibriumMeasure {
    pub radius: f64,
    /// Equal to the capacity of the obstacle, `1 / gamma`.
    pub total_mass: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Obstacle {
    center: Vec<f64>,
    threshold: f64,
    radius: f64,
}

pub fn make_obstacle<K: GreenKernel + ?Sized>(k: &K, x: &[f64], gamma: f64) -> Result<Obstacle> {
    check_threshold(gamma)?;
    check_dim(k.dim(), x, "obstacle center")?;
    Ok(Obstacle {
        center: x.to_vec(),
        threshold: gamma,
        radius: k.level_radius(gamma)?,
    })
}

impl Obstacle {
    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn measure(&self) -> EquilibriumMeasure {
        EquilibriumMeasure {
            radius: self.radius,
            total_mass: 1.0 / self.threshold,
        }
    }

    /// Closed-ball membership, `|y - x| <= R`.
    pub fn contains(&self, y: &[f64]) -> bool {
        distance(&self.center, y) <= self.radius
    }

    /// `min(G(x, y), gamma) / gamma`.
    pub fn equilibrium_potential<K: GreenKernel + ?Sized>(&self, k: &K, y: &[f64]) -> Result<f64> {
        check_dim(k.dim(), y, "y")?;
        Ok(k.truncated_radial(distance(&self.center, y), self.threshold) / self.threshold)
    }

    /// Spherical average of `h` over the obstacle boundary, evaluated with `q`.
    pub fn capacitary_mean<E>(
        &self,
        q: &SphereQuadrature,
        mut h: impl FnMut(&[f64]) -> std::result::Result<f64, E>,
    ) -> std::result::Result<f64, E>
    where
        E: From<crate::Error>,
    {
        check_dim(self.center.len(), q.node(0), "quadrature node").map_err(E::from)?;
        let mut y = vec![0.0; self.center.len()];
        let mut acc = CompensatedSum::default();
        for (w, u) in q.iter() {
            for ((yi, ci), ui) in y.iter_mut().zip(&self.center).zip(u) {
                *yi = ci + self.radius * ui;
            }
            acc.add(w * h(&y)?);
        }
        Ok(acc.value())
    }

    /// [`Self::capacitary_mean`] for an infallible integrand.
    pub fn spherical_mean(&self, q: &SphereQuadrature, mut h: impl FnMut(&[f64]) -> f64) -> Result<f64> {
        self.capacitary_mean::<crate::Error>(q, |y| Ok(h(y)))
    }
}
