//! Thin wrapper over faer's dense Cholesky, always run sequentially so that
//! results do not depend on the size of any thread pool.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::{cholesky_in_place, cholesky_in_place_scratch};
use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::{Mat, MatRef, Par};

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub(crate) struct Cholesky {
    l: Mat<f64>,
}

impl Cholesky {
    /// Factors `a + shift * I`; `a` is a symmetric row-major `n x n` buffer.
    /// Returns `None` on a non-positive pivot or non-finite input.
    pub(crate) fn factor(a: &[f64], n: usize, shift: f64) -> Option<Self> {
        debug_assert_eq!(a.len(), n * n);
        if !shift.is_finite() || a.iter().any(|v| !v.is_finite()) {
            return None;
        }
        // Symmetric, so the row-major buffer is also its own column-major form.
        let src = MatRef::from_column_major_slice(a, n, n);
        let mut l = Mat::<f64>::from_fn(n, n, |i, j| if i >= j { src[(i, j)] } else { 0.0 });
        for i in 0..n {
            l[(i, i)] += shift;
        }
        let mut mem = MemBuffer::new(cholesky_in_place_scratch::<f64>(n, Par::Seq, Default::default()));
        let stack = MemStack::new(&mut mem);
        cholesky_in_place(l.as_mut(), Default::default(), Par::Seq, stack, Default::default()).ok()?;
        for j in 0..n {
            for i in 0..j {
                l[(i, j)] = 0.0;
            }
        }
        if (0..n).any(|i| !(l[(i, i)] > 0.0) || !l[(i, i)].is_finite()) {
            return None;
        }
        Some(Self { l })
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.nrows();
        let mut x = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
        solve_lower_triangular_in_place(self.l.as_ref(), x.as_mut(), Par::Seq);
        solve_upper_triangular_in_place(self.l.as_ref().transpose(), x.as_mut(), Par::Seq);
        (0..n).map(|i| x[(i, 0)]).collect()
    }
}

/// `y = a x` for a row-major `n x n` buffer.
pub(crate) fn matvec(a: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
    a.chunks_exact(n).map(|row| dot(row, x)).collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four independent accumulators in a fixed order: vectorizes, and the
    // summation order never changes.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * k + l] * b[4 * k + l];
        }
    }
    let mut tail = 0.0;
    for k in 4 * chunks..a.len() {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Neumaier compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        let a = [4.0, 1.0, 1.0, 3.0];
        let f = Cholesky::factor(&a, 2, 0.0).unwrap();
        let x = f.solve(&[1.0, 2.0]);
        let r = matvec(&a, 2, &x);
        assert!((r[0] - 1.0).abs() < 1e-14 && (r[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_indefinite_and_nan() {
        assert!(Cholesky::factor(&[1.0, 2.0, 2.0, 1.0], 2, 0.0).is_none());
        assert!(Cholesky::factor(&[f64::NAN, 0.0, 0.0, 1.0], 2, 0.0).is_none());
        assert!(Cholesky::factor(&[1.0, 1.0, 1.0, 1.0], 2, 0.0).is_none());
        assert!(Cholesky::factor(&[1.0, 1.0, 1.0, 1.0], 2, 1e-12).is_some());
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        for v in [1.0, 1e100, 1.0, -1e100] {
            s.add(v);
        }
        assert_eq!(s.value(), 2.0);
    }
}
