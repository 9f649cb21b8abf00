//! Random-obstacle renormalized ridge regression.
//!
//! Pointwise evaluation is not continuous on a transient Dirichlet space, so
//! the ridge loss is renormalized by replacing `g(X_i)` with the average of
//! `g` over the boundary of a Green level-set obstacle around `X_i`. The
//! minimizer is a combination of Green functions truncated at the obstacle
//! threshold,
//!
//! ```text
//! f(x) = sum_i c_i min(G(X_i, x), gamma),   c = (G_n + n lambda I)^-1 y,
//! ```
//!
//! where `G_n` is the Gram matrix of the truncated kernels in the Dirichlet
//! energy.
//!
//! | module | contents |
//! |--------|----------|
//! | [`kernel`] | Green functions, level radii, truncation |
//! | [`obstacle`] | obstacles, equilibrium potentials, capacitary means |
//! | [`sphere`] | sphere quadratures |
//! | [`gram`] | Gram assembly, jitter repair, binary cache |
//! | [`solve`] | ridge and norm-constrained solves |
//! | [`estimator`] | fit / predict, parameter schedules, model files |
//! | [`oracle`] | Monte Carlo and harmonicity oracles, Poincaré checks |
//! | [`experiments`] | synthetic targets, rate studies, ill-posedness demo |

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimator;
pub mod experiments;
pub mod gram;
pub mod kernel;
mod linalg;
pub mod obstacle;
pub mod oracle;
pub mod points;
pub mod rng;
pub mod solve;
pub mod sphere;

pub use error::{Error, Result};
pub use estimator::{
    erm_fit, fit, predict, predict_batch, schedule_params, smoothed_predict, Dataset, FittedModel, Mode, Schedule,
};
pub use experiments::{
    illposed_demo, mse_estimate, run_rate_study, sample_dataset, synth_target, ExperimentConfig, RateStudyResult,
    SyntheticTarget,
};
pub use gram::{assemble_gram, gram_entry, gram_entry_by_quadrature, psd_jitter, GramCache, GramMatrix};
pub use kernel::{green_constant, EuclideanKernel, GreenKernel, SpaceParams};
pub use obstacle::{make_obstacle, EquilibriumMeasure, Obstacle};
pub use oracle::{harmonicity_residual, mc_sphere_mean, poincare_ratio, second_moment_ratio, McEstimate};
pub use points::PointSet;
pub use solve::{erm_solve, h_norm_sq, ridge_solve, ErmSolution, RidgeSolution};
pub use sphere::{sphere_quadrature, QuadratureMode, SphereQuadrature};
