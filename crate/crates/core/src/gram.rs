//! The renormalized Gram matrix `(G_n)_ij = gamma^2 E(e_i, e_j)`.
//!
//! Since the equilibrium measure of obstacle `j` represents `E(., e_j)`, each
//! entry is the spherical average over `dB(x_j, R)` of `min(G(x_i, .), gamma)`.
//! When the two obstacles are at least `2R` apart that function is harmonic on
//! a neighbourhood of the sphere and the average collapses to `G(x_i, x_j)`
//! (fast path). Otherwise the average is computed with a sphere quadrature
//! and symmetrized over the two orderings.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{shape, Error, Result};
use crate::kernel::{check_threshold, GreenKernel};
use crate::linalg::{self, Cholesky, CompensatedSum};
use crate::points::{check_dim, distance, PointSet};
use crate::sphere::SphereQuadrature;

/// Relative margin on `2R` below which obstacles count as overlapping.
pub const SEPARATION_MARGIN: f64 = 1e-9;

/// Symmetric `n x n` Gram matrix, stored densely in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    n: usize,
    entries: Vec<f64>,
    gamma: f64,
    fast_path_count: usize,
    jitter: f64,
}

impl GramMatrix {
    /// Builds a Gram matrix from a full row-major buffer, which must be
    /// exactly symmetric.
    pub fn from_dense(n: usize, entries: Vec<f64>, gamma: f64) -> Result<Self> {
        if entries.len() != n * n {
            return Err(shape(format!("{} entries for a {n} x {n} matrix", entries.len())));
        }
        for i in 0..n {
            for j in 0..i {
                if entries[i * n + j] != entries[j * n + i] {
                    return Err(shape(format!("entries ({i}, {j}) and ({j}, {i}) differ")));
                }
            }
        }
        Ok(Self {
            n,
            entries,
            gamma,
            fast_path_count: 0,
            jitter: 0.0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Number of off-diagonal upper-triangle entries taken from the fast path.
    pub fn fast_path_count(&self) -> usize {
        self.fast_path_count
    }

    /// Multiple of the identity added by [`psd_jitter`].
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn matvec(&self, c: &[f64]) -> Result<Vec<f64>> {
        self.check_len(c)?;
        Ok(linalg::matvec(&self.entries, self.n, c))
    }

    /// `c^T G c` without clamping.
    pub fn quad_form(&self, c: &[f64]) -> Result<f64> {
        Ok(linalg::dot(c, &self.matvec(c)?))
    }

    pub(crate) fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n {
            return Err(shape(format!(
                "vector of length {} for a {}-point Gram matrix",
                v.len(),
                self.n
            )));
        }
        Ok(())
    }
}

/// One Gram entry; see the module docs for the two evaluation routes.
pub fn gram_entry<K: GreenKernel + ?Sized>(
    k: &K,
    xi: &[f64],
    xj: &[f64],
    gamma: f64,
    q: &SphereQuadrature,
) -> Result<f64> {
    check_threshold(gamma)?;
    check_dim(k.dim(), xi, "xi")?;
    check_dim(k.dim(), xj, "xj")?;
    check_dim(k.dim(), q.node(0), "quadrature node")?;
    let radius = k.level_radius(gamma)?;
    let mut buf = vec![0.0; xi.len()];
    Ok(entry(k, xi, xj, gamma, radius, q, &mut buf).0)
}

/// The symmetrized quadrature value of an off-diagonal entry, bypassing the
/// fast path. Used to cross-check [`gram_entry`] on separated pairs.
pub fn gram_entry_by_quadrature<K: GreenKernel + ?Sized>(
    k: &K,
    xi: &[f64],
    xj: &[f64],
    gamma: f64,
    q: &SphereQuadrature,
) -> Result<f64> {
    check_threshold(gamma)?;
    check_dim(k.dim(), xi, "xi")?;
    check_dim(k.dim(), xj, "xj")?;
    check_dim(k.dim(), q.node(0), "quadrature node")?;
    let radius = k.level_radius(gamma)?;
    let mut buf = vec![0.0; xi.len()];
    let a = sphere_mean_of_kernel(k, xi, xj, gamma, radius, q, &mut buf);
    let b = sphere_mean_of_kernel(k, xj, xi, gamma, radius, q, &mut buf);
    Ok(0.5 * (a + b))
}

/// Returns the entry and whether the fast path was taken.
fn entry<K: GreenKernel + ?Sized>(
    k: &K,
    xi: &[f64],
    xj: &[f64],
    gamma: f64,
    radius: f64,
    q: &SphereQuadrature,
    buf: &mut [f64],
) -> (f64, bool) {
    if xi == xj {
        return (gamma, false);
    }
    let s = distance(xi, xj);
    if s >= 2.0 * radius * (1.0 + SEPARATION_MARGIN) {
        return (k.radial(s), true);
    }
    let a = sphere_mean_of_kernel(k, xi, xj, gamma, radius, q, buf);
    let b = sphere_mean_of_kernel(k, xj, xi, gamma, radius, q, buf);
    (0.5 * (a + b), false)
}

/// Average of `min(G(source, .), gamma)` over the sphere `|y - center| = radius`.
pub(crate) fn sphere_mean_of_kernel<K: GreenKernel + ?Sized>(
    k: &K,
    source: &[f64],
    center: &[f64],
    gamma: f64,
    radius: f64,
    q: &SphereQuadrature,
    buf: &mut [f64],
) -> f64 {
    let mut acc = CompensatedSum::default();
    for (w, u) in q.iter() {
        for ((y, c), u) in buf.iter_mut().zip(center).zip(u) {
            *y = c + radius * u;
        }
        acc.add(w * k.truncated_radial(distance(source, buf), gamma));
    }
    acc.value()
}

/// Assembles the Gram matrix of `points` in parallel over rows.
pub fn assemble_gram<K: GreenKernel + ?Sized>(
    k: &K,
    points: &PointSet,
    gamma: f64,
    q: &SphereQuadrature,
) -> Result<GramMatrix> {
    check_threshold(gamma)?;
    let n = points.len();
    if n == 0 {
        return Err(shape("cannot assemble a Gram matrix of zero points"));
    }
    if points.dim() != k.dim() || q.dim() != k.dim() {
        return Err(shape(format!(
            "points have dimension {}, quadrature {}, kernel {}",
            points.dim(),
            q.dim(),
            k.dim()
        )));
    }
    let radius = k.level_radius(gamma)?;
    let rows: Vec<(Vec<f64>, usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut buf = vec![0.0; points.dim()];
            let xi = points.row(i);
            let mut fast = 0;
            let row = (i..n)
                .map(|j| {
                    if i == j {
                        return gamma;
                    }
                    let (v, f) = entry(k, xi, points.row(j), gamma, radius, q, &mut buf);
                    fast += f as usize;
                    v
                })
                .collect();
            (row, fast)
        })
        .collect();
    let mut entries = vec![0.0; n * n];
    let mut fast_path_count = 0;
    for (i, (row, fast)) in rows.into_iter().enumerate() {
        fast_path_count += fast;
        for (off, v) in row.into_iter().enumerate() {
            let j = i + off;
            entries[i * n + j] = v;
            entries[j * n + i] = v;
        }
    }
    Ok(GramMatrix {
        n,
        entries,
        gamma,
        fast_path_count,
        jitter: 0.0,
    })
}

/// Jitter levels tried by [`psd_jitter`], as multiples of `gamma`.
pub fn jitter_ladder() -> impl Iterator<Item = f64> {
    std::iter::once(0.0).chain((3..=12).rev().map(|e| 10f64.powi(-e)))
}

/// Factors `G + shift * I + tau * I`, escalating `tau` along the jitter ladder.
pub(crate) fn factor_with_jitter(g: &GramMatrix, shift: f64) -> Result<(Cholesky, f64)> {
    if g.entries.iter().any(|v| !v.is_finite()) {
        return Err(Error::Factorization("Gram matrix has non-finite entries".into()));
    }
    for rel in jitter_ladder() {
        let tau = rel * g.gamma;
        if let Some(f) = Cholesky::factor(&g.entries, g.n, shift + tau) {
            return Ok((f, tau));
        }
    }
    Err(Error::Factorization(format!(
        "not positive definite even with jitter 1e-3 * gamma (shift {shift})"
    )))
}

/// Returns `G + tau I` for the smallest ladder `tau` admitting a Cholesky
/// factorization, with `tau` recorded in [`GramMatrix::jitter`].
pub fn psd_jitter(g: &GramMatrix) -> Result<GramMatrix> {
    let (_, tau) = factor_with_jitter(g, 0.0)?;
    let mut out = g.clone();
    for i in 0..out.n {
        out.entries[i * out.n + i] += tau;
    }
    out.jitter += tau;
    Ok(out)
}

// Binary layout, little endian:
//   magic "OGRM" | version u32 | n u64 | gamma f64 | n(n+1)/2 f64 upper triangle, row-major
const MAGIC: &[u8; 4] = b"OGRM";
const VERSION: u32 = 1;

pub fn write_gram<W: Write>(g: &GramMatrix, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(g.n as u64).to_le_bytes())?;
    w.write_all(&g.gamma.to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * g.n * (g.n + 1) / 2);
    for i in 0..g.n {
        for j in i..g.n {
            buf.extend_from_slice(&g.get(i, j).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads a matrix written by [`write_gram`]. The fast-path count is not part
/// of the layout and reads back as zero.
pub fn read_gram<R: Read>(mut r: R) -> Result<GramMatrix> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a Gram cache file (bad magic)".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported Gram cache version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let n = usize::try_from(u64::from_le_bytes(b8)).map_err(|_| Error::Format("matrix size overflows usize".into()))?;
    r.read_exact(&mut b8)?;
    let gamma = f64::from_le_bytes(b8);
    let count = n
        .checked_mul(n + 1)
        .map(|v| v / 2)
        .ok_or_else(|| Error::Format("matrix size overflows".into()))?;
    let mut raw = Vec::new();
    r.read_to_end(&mut raw)?;
    if raw.len() != 8 * count {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            8 * count,
            raw.len()
        )));
    }
    let mut values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = values.next().expect("count checked above");
            entries[i * n + j] = v;
            entries[j * n + i] = v;
        }
    }
    Ok(GramMatrix {
        n,
        entries,
        gamma,
        fast_path_count: 0,
        jitter: 0.0,
    })
}

/// On-disk cache of assembled Gram matrices keyed by
/// `(points, gamma, kernel constants, quadrature descriptor)`.
#[derive(Clone, Debug)]
pub struct GramCache {
    dir: PathBuf,
}

impl GramCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for<K: GreenKernel + ?Sized>(
        &self,
        k: &K,
        points: &PointSet,
        gamma: f64,
        q: &SphereQuadrature,
    ) -> PathBuf {
        let mut h = Fnv64::default();
        h.write_u64(points.dim() as u64);
        h.write_u64(points.len() as u64);
        points.as_slice().iter().for_each(|v| h.write_u64(v.to_bits()));
        h.write_u64(gamma.to_bits());
        h.write_u64(k.params().green_constant.to_bits());
        h.write_u64(k.params().walk_exponent.to_bits());
        h.write_bytes(q.descriptor().as_bytes());
        self.dir.join(format!("{:016x}.ogrm", h.0))
    }

    /// Loads the cached matrix if present, otherwise assembles and stores it.
    pub fn load_or_assemble<K: GreenKernel + ?Sized>(
        &self,
        k: &K,
        points: &PointSet,
        gamma: f64,
        q: &SphereQuadrature,
    ) -> Result<GramMatrix> {
        let path = self.path_for(k, points, gamma, q);
        if path.exists() {
            let mut g = read_gram(std::io::BufReader::new(std::fs::File::open(&path)?))?;
            if g.n != points.len() || g.gamma != gamma {
                return Err(Error::Format(format!("{} does not match its key", path.display())));
            }
            g.fast_path_count = count_fast_pairs(k, points, gamma)?;
            return Ok(g);
        }
        let g = assemble_gram(k, points, gamma, q)?;
        std::fs::create_dir_all(&self.dir)?;
        write_atomically(&path, |w| write_gram(&g, w))?;
        Ok(g)
    }
}

fn count_fast_pairs<K: GreenKernel + ?Sized>(k: &K, points: &PointSet, gamma: f64) -> Result<usize> {
    let cut = 2.0 * k.level_radius(gamma)? * (1.0 + SEPARATION_MARGIN);
    let n = points.len();
    Ok((0..n)
        .map(|i| {
            (i + 1..n)
                .filter(|&j| points.row(i) != points.row(j) && distance(points.row(i), points.row(j)) >= cut)
                .count()
        })
        .sum())
}

fn write_atomically(path: &Path, f: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        f(&mut w)?;
        w.flush()?;
    }
    std::fs::rename(tmp, path)?;
    Ok(())
}

/// FNV-1a, 64 bit. Stable across platforms and toolchains.
struct Fnv64(u64);

impl Default for Fnv64 {
    fn default() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv64 {
    fn write_bytes(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= *b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn write_u64(&mut self, v: u64) {
        self.write_bytes(&v.to_le_bytes());
    }
}
