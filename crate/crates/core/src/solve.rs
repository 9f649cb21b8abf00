//! Representer coefficients: the ridge system `(G_n + n lambda I) c = y` and
//! the norm-constrained least-squares problem
//! `min (1/n) |y - G_n c|^2  s.t.  c^T G_n c <= M^2`.
//!
//! Both take the Gram matrix as given. The ridge weight always enters as the
//! product `n lambda`, spelled out at the call site.

use crate::error::{param, Error, Result};
use crate::gram::{factor_with_jitter, GramMatrix};
use crate::linalg::{dot, norm2, Cholesky};

/// Relative residual required of every ridge solve.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;
const MAX_REFINEMENTS: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct RidgeSolution {
    pub c: Vec<f64>,
    /// Diagonal jitter the factorization needed on top of `n lambda`.
    pub applied_jitter: f64,
    /// `|(G + n lambda I) c - y|_2`.
    pub residual_norm: f64,
}

struct Shifted {
    c: Vec<f64>,
    tau: f64,
    residual_norm: f64,
    factor: Cholesky,
}

/// Solves `(G + shift I) c = y` with jitter fallback and iterative refinement
/// against the unjittered operator.
fn solve_shifted(g: &GramMatrix, y: &[f64], shift: f64) -> Result<Shifted> {
    let (factor, tau) = factor_with_jitter(g, shift)?;
    let target = RESIDUAL_TOLERANCE * norm2(y);
    let mut c = factor.solve(y);
    let mut residual = residual(g, y, shift, &c);
    let mut residual_norm = norm2(&residual);
    for _ in 0..MAX_REFINEMENTS {
        if residual_norm <= target {
            break;
        }
        let dc = factor.solve(&residual);
        let trial: Vec<f64> = c.iter().zip(&dc).map(|(a, b)| a + b).collect();
        let r = self::residual(g, y, shift, &trial);
        let rn = norm2(&r);
        if !(rn < residual_norm) {
            break;
        }
        c = trial;
        residual = r;
        residual_norm = rn;
    }
    Ok(Shifted {
        c,
        tau,
        residual_norm,
        factor,
    })
}

fn residual(g: &GramMatrix, y: &[f64], shift: f64, c: &[f64]) -> Vec<f64> {
    (0..g.n()).map(|i| y[i] - dot(g.row(i), c) - shift * c[i]).collect()
}

/// `c = (G + n lambda I)^-1 y`.
pub fn ridge_solve(g: &GramMatrix, y: &[f64], n_lambda: f64) -> Result<RidgeSolution> {
    g.check_len(y)?;
    if !(n_lambda >= 0.0 && n_lambda.is_finite()) {
        return Err(param(format!(
            "n * lambda must be finite and non-negative, got {n_lambda}"
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(param("responses must be finite"));
    }
    let s = solve_shifted(g, y, n_lambda)?;
    if s.residual_norm > RESIDUAL_TOLERANCE * norm2(y) {
        let msg = format!(
            "residual {:.3e} exceeds {RESIDUAL_TOLERANCE:e} * |y| (jitter {:.3e})",
            s.residual_norm, s.tau
        );
        return Err(if n_lambda == 0.0 {
            Error::SingularSystem(msg)
        } else {
            Error::Convergence(msg)
        });
    }
    Ok(RidgeSolution {
        c: s.c,
        applied_jitter: s.tau,
        residual_norm: s.residual_norm,
    })
}

/// `c^T G c`, clamped at zero against round-off.
pub fn h_norm_sq(g: &GramMatrix, c: &[f64]) -> Result<f64> {
    Ok(g.quad_form(c)?.max(0.0))
}

/// Renormalized ridge objective `(1/n) |y - G c|^2 + lambda c^T G c`.
pub fn ridge_objective(g: &GramMatrix, y: &[f64], c: &[f64], lambda: f64) -> Result<f64> {
    g.check_len(y)?;
    let gc = g.matvec(c)?;
    let n = g.n() as f64;
    let fit: f64 = y.iter().zip(&gc).map(|(y, p)| (y - p) * (y - p)).sum::<f64>() / n;
    Ok(fit + lambda * dot(c, &gc))
}

/// Result of the norm-constrained problem.
#[derive(Clone, Debug, PartialEq)]
pub struct ErmSolution {
    pub c: Vec<f64>,
    /// Lagrange multiplier in ridge units (`0` when the constraint is slack).
    pub lambda_active: f64,
    /// Every `(lambda, c^T G c)` evaluated, in evaluation order.
    pub trace: Vec<(f64, f64)>,
    pub applied_jitter: f64,
}

/// Relative tolerance on `c^T G c = M^2`.
pub const ERM_NORM_TOLERANCE: f64 = 1e-6;
pub const ERM_MAX_ITERATIONS: usize = 200;
const ERM_LAMBDA_FLOOR: f64 = 1e-14;

/// Minimizes `(1/n)|y - G c|^2` subject to `c^T G c <= M^2`.
///
/// If the least-norm interpolant is feasible it is returned with
/// `lambda_active = 0`. Otherwise the active multiplier is found by a
/// bracketed search in `log lambda` on the strictly decreasing map
/// `lambda -> c(lambda)^T G c(lambda)`: each step tries a Newton update on
/// `log N` (the derivative costs one extra triangular solve) and falls back
/// to bisecting the bracket whenever Newton leaves it.
pub fn erm_solve(g: &GramMatrix, y: &[f64], m: f64) -> Result<ErmSolution> {
    g.check_len(y)?;
    if !(m > 0.0 && m.is_finite()) {
        return Err(param(format!("norm bound must be positive and finite, got {m}")));
    }
    let n = g.n() as f64;
    let m2 = m * m;
    let tol = ERM_NORM_TOLERANCE * m2;
    let mut trace = Vec::new();

    let eval = |lambda: f64, trace: &mut Vec<(f64, f64)>| -> Result<(Shifted, f64)> {
        let s = solve_shifted(g, y, n * lambda)?;
        let norm = h_norm_sq(g, &s.c)?;
        trace.push((lambda, norm));
        Ok((s, norm))
    };

    let (free, free_norm) = eval(0.0, &mut trace)?;
    if free_norm <= m2 {
        return Ok(ErmSolution {
            c: free.c,
            lambda_active: 0.0,
            trace,
            applied_jitter: free.tau,
        });
    }

    let mut lo = ERM_LAMBDA_FLOOR;
    let (mut s, mut norm) = eval(lo, &mut trace)?;
    while norm < m2 - tol {
        lo *= 1e-2;
        if lo < 1e-300 {
            break;
        }
        (s, norm) = eval(lo, &mut trace)?;
    }
    if (norm - m2).abs() <= tol || lo < 1e-300 {
        return Ok(finish(s, lo, trace));
    }

    let mut hi = 1.0;
    let mut hi_eval = eval(hi, &mut trace)?;
    let mut doublings = 0;
    while hi_eval.1 >= m2 {
        hi *= 2.0;
        doublings += 1;
        if doublings > 2000 || !hi.is_finite() {
            return Err(Error::Convergence("could not bracket the norm constraint".into()));
        }
        hi_eval = eval(hi, &mut trace)?;
    }
    if (hi_eval.1 - m2).abs() <= tol {
        return Ok(finish(hi_eval.0, hi, trace));
    }

    // Current iterate starts at the lower end of the bracket.
    let mut lambda = lo;
    for _ in 0..ERM_MAX_ITERATIONS {
        let (ulo, uhi) = (lo.ln(), hi.ln());
        let newton = newton_log_step(&s, norm, lambda, n, y, m2);
        let margin = 1e-3 * (uhi - ulo);
        let u = match newton {
            Some(u) if u > ulo + margin && u < uhi - margin => u,
            _ => 0.5 * (ulo + uhi),
        };
        lambda = u.exp();
        (s, norm) = eval(lambda, &mut trace)?;
        if (norm - m2).abs() <= tol {
            return Ok(finish(s, lambda, trace));
        }
        if norm > m2 {
            lo = lambda;
        } else {
            hi = lambda;
        }
    }
    Err(Error::Convergence(format!(
        "norm constraint not met within {ERM_MAX_ITERATIONS} iterations (last |c^T G c - M^2| = {:.3e})",
        (norm - m2).abs()
    )))
}

fn finish(s: Shifted, lambda: f64, trace: Vec<(f64, f64)>) -> ErmSolution {
    ErmSolution {
        c: s.c,
        lambda_active: lambda,
        trace,
        applied_jitter: s.tau,
    }
}

/// Newton update of `u = log lambda` for `log N(lambda) = log M^2`.
///
/// With `mu = n lambda`, `A = G + mu I` and `c = A^-1 y`:
/// `dN/dmu = -2 (G c)^T A^-1 c = -2 (y - mu c)^T A^-1 c`.
fn newton_log_step(s: &Shifted, norm: f64, lambda: f64, n: f64, y: &[f64], m2: f64) -> Option<f64> {
    if !(norm > 0.0) {
        return None;
    }
    let mu = n * lambda;
    let w = s.factor.solve(&s.c);
    let gc: Vec<f64> = y.iter().zip(&s.c).map(|(y, c)| y - mu * c).collect();
    let dn_dmu = -2.0 * dot(&gc, &w);
    let slope = mu * dn_dmu / norm;
    if !(slope < 0.0) || !slope.is_finite() {
        return None;
    }
    let u = lambda.ln() - (norm.ln() - m2.ln()) / slope;
    u.is_finite().then_some(u)
}
