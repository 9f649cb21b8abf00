//! Fitting and prediction.
//!
//! A fitted model is `f(x) = sum_i c_i min(G(X_i, x), gamma)`. [`predict`]
//! evaluates it directly; [`smoothed_predict`] evaluates its capacitary mean
//! `P_x f = sum_i c_i gamma^2 E(e_i, e_x)`, which at a training point is the
//! corresponding entry of `G_n c`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, shape, Error, Result};
use crate::gram::{assemble_gram, gram_entry, GramMatrix};
use crate::kernel::{check_threshold, EuclideanKernel, GreenKernel, SpaceParams};
use crate::points::{check_dim, PointSet};
use crate::solve::{erm_solve, h_norm_sq, ridge_solve};
use crate::sphere::SphereQuadrature;

/// Version tag written into serialized models.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    x: PointSet,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: PointSet, y: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(shape("a dataset needs at least one observation"));
        }
        if x.len() != y.len() {
            return Err(shape(format!("{} covariate rows but {} responses", x.len(), y.len())));
        }
        if let Some(i) = (0..x.len()).find(|&i| x.row(i).iter().any(|v| !v.is_finite()) || !y[i].is_finite()) {
            return Err(param(format!("observation {i} has a non-finite value")));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &PointSet {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub format_version: u32,
    pub d: usize,
    pub gamma: f64,
    /// Ridge weight, or the active multiplier for a norm-constrained fit.
    pub lambda: f64,
    /// Row-major `n x d`.
    pub centers: Vec<f64>,
    pub c: Vec<f64>,
    pub space: SpaceParams,
    pub applied_jitter: f64,
}

impl FittedModel {
    pub fn new(centers: PointSet, c: Vec<f64>, gamma: f64, lambda: f64) -> Result<Self> {
        check_threshold(gamma)?;
        if centers.len() != c.len() {
            return Err(shape(format!("{} centers but {} coefficients", centers.len(), c.len())));
        }
        let d = centers.dim();
        Ok(Self {
            format_version: MODEL_FORMAT_VERSION,
            d,
            gamma,
            lambda,
            centers: centers.as_slice().to_vec(),
            c,
            space: SpaceParams::euclidean(d)?,
            applied_jitter: 0.0,
        })
    }

    pub fn kernel(&self) -> Result<EuclideanKernel> {
        EuclideanKernel::from_params(self.space)
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn center(&self, i: usize) -> &[f64] {
        &self.centers[i * self.d..(i + 1) * self.d]
    }

    pub fn centers(&self) -> Result<PointSet> {
        PointSet::new(self.d, self.centers.clone())
    }

    /// Serializes to JSON. Floats are written in shortest round-trip form, so
    /// [`Self::from_json`] recovers every value bit for bit.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format version {}",
                m.format_version
            )));
        }
        if m.d != m.space.dimension || m.d == 0 || m.centers.len() != m.d * m.c.len() {
            return Err(Error::Format("model fields have inconsistent shapes".into()));
        }
        if !(m.gamma > 0.0 && m.gamma.is_finite()) {
            return Err(Error::Format(format!("model threshold {} is not positive", m.gamma)));
        }
        Ok(m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ridge,
    Erm,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ridge" => Ok(Mode::Ridge),
            "erm" => Ok(Mode::Erm),
            other => Err(param(format!("unknown mode {other:?} (expected ridge or erm)"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Ridge => "ridge",
            Mode::Erm => "erm",
        })
    }
}

/// Parameter schedule `gamma_n = gamma0 n^a`, `lambda_n = lambda0 n^-b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub gamma0: f64,
    pub lambda0: f64,
    pub mode: Mode,
    pub d: usize,
    /// When set, ridge mode uses `lambda = kappa * gamma^(2 / (2 - d))`
    /// instead of `lambda0 n^-b`.
    pub linked_kappa: Option<f64>,
}

impl Schedule {
    pub fn new(d: usize, gamma0: f64, lambda0: f64, mode: Mode) -> Self {
        Self {
            gamma0,
            lambda0,
            mode,
            d,
            linked_kappa: None,
        }
    }

    /// Exponent of `n` in `gamma_n`.
    pub fn gamma_exponent(&self) -> f64 {
        let d = self.d as f64;
        match self.mode {
            Mode::Ridge => (d - 2.0) / (d + 2.0),
            Mode::Erm => (d - 2.0) / (2.0 * d),
        }
    }

    /// Exponent of `n` in `lambda_n` (negative).
    pub fn lambda_exponent(&self) -> f64 {
        -2.0 / (self.d as f64 + 2.0)
    }
}

/// `(gamma_n, lambda_n)`; `lambda_n` is `0` in ERM mode.
pub fn schedule_params(s: &Schedule, n: usize) -> Result<(f64, f64)> {
    if n < 1 {
        return Err(param("schedule needs n >= 1"));
    }
    if s.d < 3 {
        return Err(Error::Dimension(s.d));
    }
    if !(s.gamma0 > 0.0 && s.gamma0.is_finite()) {
        return Err(param(format!("gamma0 must be positive, got {}", s.gamma0)));
    }
    let nf = n as f64;
    let gamma = s.gamma0 * nf.powf(s.gamma_exponent());
    let lambda = match (s.mode, s.linked_kappa) {
        (Mode::Erm, _) => 0.0,
        (Mode::Ridge, Some(kappa)) => kappa * gamma.powf(2.0 / (2.0 - s.d as f64)),
        (Mode::Ridge, None) => {
            if !(s.lambda0 > 0.0 && s.lambda0.is_finite()) {
                return Err(param(format!("lambda0 must be positive, got {}", s.lambda0)));
            }
            s.lambda0 * nf.powf(s.lambda_exponent())
        }
    };
    Ok((gamma, lambda))
}

fn kernel_for(ds: &Dataset) -> Result<EuclideanKernel> {
    EuclideanKernel::new(ds.dim())
}

/// Ridge fit: assembles the Gram matrix and solves with `n lambda`.
pub fn fit(ds: &Dataset, gamma: f64, lambda: f64, q: &SphereQuadrature) -> Result<FittedModel> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(param(format!("lambda must be positive, got {lambda}")));
    }
    let g = assemble_gram(&kernel_for(ds)?, ds.x(), gamma, q)?;
    fit_with_gram(ds, &g, lambda)
}

/// Ridge fit against an already assembled Gram matrix of `ds.x()`.
pub fn fit_with_gram(ds: &Dataset, g: &GramMatrix, lambda: f64) -> Result<FittedModel> {
    if g.n() != ds.len() {
        return Err(shape(format!(
            "Gram matrix of size {} for {} observations",
            g.n(),
            ds.len()
        )));
    }
    let sol = ridge_solve(g, ds.y(), ds.len() as f64 * lambda)?;
    let mut m = FittedModel::new(ds.x().clone(), sol.c, g.gamma(), lambda)?;
    m.applied_jitter = sol.applied_jitter;
    Ok(m)
}

/// Norm-constrained fit with `c^T G c <= M^2`. The model's `lambda` is the
/// active multiplier.
pub fn erm_fit(ds: &Dataset, gamma: f64, m: f64, q: &SphereQuadrature) -> Result<FittedModel> {
    let g = assemble_gram(&kernel_for(ds)?, ds.x(), gamma, q)?;
    erm_fit_with_gram(ds, &g, m)
}

pub fn erm_fit_with_gram(ds: &Dataset, g: &GramMatrix, m: f64) -> Result<FittedModel> {
    if g.n() != ds.len() {
        return Err(shape(format!(
            "Gram matrix of size {} for {} observations",
            g.n(),
            ds.len()
        )));
    }
    let sol = erm_solve(g, ds.y(), m)?;
    let mut model = FittedModel::new(ds.x().clone(), sol.c, g.gamma(), sol.lambda_active)?;
    model.applied_jitter = sol.applied_jitter;
    Ok(model)
}

/// `sum_i c_i min(G(X_i, x), gamma)`.
pub fn predict(m: &FittedModel, x: &[f64]) -> Result<f64> {
    let k = m.kernel()?;
    check_dim(m.d, x, "query")?;
    Ok(raw_prediction(m, &k, x))
}

fn raw_prediction(m: &FittedModel, k: &EuclideanKernel, x: &[f64]) -> f64 {
    (0..m.len())
        .map(|i| m.c[i] * k.truncated_radial(crate::points::distance(m.center(i), x), m.gamma))
        .sum()
}

/// [`predict`] over every row of `xs`, in parallel.
pub fn predict_batch(m: &FittedModel, xs: &PointSet) -> Result<Vec<f64>> {
    let k = m.kernel()?;
    if xs.dim() != m.d {
        return Err(shape(format!(
            "queries have dimension {} but the model has {}",
            xs.dim(),
            m.d
        )));
    }
    Ok((0..xs.len())
        .into_par_iter()
        .map(|j| raw_prediction(m, &k, xs.row(j)))
        .collect())
}

/// Capacitary mean of the fitted function over the obstacle boundary at `x`.
///
/// Each term is the Gram-entry value between `X_i` and `x`: `G(X_i, x)` when
/// the two obstacles are disjoint, the threshold when `x = X_i`, and the
/// symmetrized spherical average otherwise.
pub fn smoothed_predict(m: &FittedModel, x: &[f64], q: &SphereQuadrature) -> Result<f64> {
    let k = m.kernel()?;
    check_dim(m.d, x, "query")?;
    let mut acc = 0.0;
    for i in 0..m.len() {
        if m.c[i] != 0.0 {
            acc += m.c[i] * gram_entry(&k, m.center(i), x, m.gamma, q)?;
        }
    }
    Ok(acc)
}

/// `c^T G c` of a model against its Gram matrix.
pub fn model_energy(m: &FittedModel, g: &GramMatrix) -> Result<f64> {
    h_norm_sq(g, &m.c)
}
