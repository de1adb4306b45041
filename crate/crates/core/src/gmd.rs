//! Geometric mean decomposition `H = Q R P^H`.
//!
//! `R` is real upper triangular with every diagonal entry equal to the
//! geometric mean of the singular values of `H`, so a decision-feedback
//! receiver sees identical gains on all spatial subchannels. The
//! construction starts from the SVD and applies paired Givens rotations to
//! `diag(sigma)`, two singular values at a time.

use crate::linalg::{ComplexMatrix, LinalgError};
use num_complex::Complex64;
use thiserror::Error;

/// Relative singular-value threshold below which a matrix is treated as
/// rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Errors from the geometric mean decomposition.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GmdError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(
        "rank deficient input: singular value {sigma:.3e} at index {index} is below {threshold:.3e}"
    )]
    RankDeficient {
        index: usize,
        sigma: f64,
        threshold: f64,
    },
}

/// Result of [`gmd`]: `H = Q R P^H` with `K = min(rows, cols)` streams.
///
/// `q` is rows x K and `p` is cols x K, both with orthonormal columns. `r`
/// is the K x K real factor stored by rows; entries below the diagonal are
/// exactly zero and every diagonal entry equals `sigma_bar` up to roundoff.
#[derive(Debug, Clone)]
pub struct GmdResult {
    pub q: ComplexMatrix,
    pub r: Vec<Vec<f64>>,
    pub p: ComplexMatrix,
    pub sigma_bar: f64,
}

impl GmdResult {
    /// Number of spatial streams `K`.
    pub fn streams(&self) -> usize {
        self.r.len()
    }

    /// `R` as a complex matrix, for products with `Q` and `P`.
    pub fn r_matrix(&self) -> ComplexMatrix {
        let k = self.r.len();
        ComplexMatrix::from_fn(k, k, |i, j| Complex64::new(self.r[i][j], 0.0))
    }

    /// Recomputes `Q R P^H`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        self.q
            .mul(&self.r_matrix())
            .expect("factor shapes agree")
            .mul(&self.p.hermitian())
            .expect("factor shapes agree")
    }
}

/// Decomposes `h` as `Q R P^H` with equal real diagonal in `R`.
///
/// Fails with [`GmdError::RankDeficient`] when any singular value falls
/// below [`RANK_TOLERANCE`] times the largest one; the equal-diagonal form
/// requires a strictly positive geometric mean.
pub fn gmd(h: &ComplexMatrix) -> Result<GmdResult, GmdError> {
    let svd = h.svd()?;
    let k = svd.sigma.len();
    let sigma_max = svd.sigma[0];
    let threshold = RANK_TOLERANCE * sigma_max;
    for (index, &sigma) in svd.sigma.iter().enumerate() {
        if sigma_max == 0.0 || sigma < threshold {
            return Err(GmdError::RankDeficient {
                index,
                sigma,
                threshold,
            });
        }
    }
    let sigma_bar = geometric_mean(&svd.sigma);

    let mut q = svd.u;
    let mut p = svd.v;
    let mut r = vec![vec![0.0f64; k]; k];
    for i in 0..k {
        r[i][i] = svd.sigma[i];
    }

    // Each step pairs one trailing diagonal entry >= sigma_bar with one
    // <= sigma_bar and rotates the pair so position `step` lands exactly on
    // sigma_bar. The trailing block stays diagonal throughout, so entries
    // below the diagonal remain exactly zero.
    for step in 0..k.saturating_sub(1) {
        let pivot = (step..k)
            .find(|&i| r[i][i] >= sigma_bar)
            .unwrap_or_else(|| extreme_index(&r, step, k, true));
        symmetric_swap(&mut r, &mut q, &mut p, step, pivot);
        let partner = ((step + 1)..k)
            .find(|&i| r[i][i] <= sigma_bar)
            .unwrap_or_else(|| extreme_index(&r, step + 1, k, false));
        symmetric_swap(&mut r, &mut q, &mut p, step + 1, partner);

        let d1 = r[step][step];
        let d2 = r[step + 1][step + 1];
        let sb = sigma_bar.clamp(d2.min(d1), d2.max(d1));
        let rot = plane_rotation(d1, d2, sb);
        r[step][step] = sb;
        r[step][step + 1] = rot.x;
        r[step + 1][step + 1] = rot.next;
        for row in r.iter_mut().take(step) {
            let a = row[step];
            let b = row[step + 1];
            row[step] = rot.c * a + rot.s * b;
            row[step + 1] = -rot.s * a + rot.c * b;
        }
        rotate_column_pair(&mut q, step, rot.c1, rot.s1);
        rotate_column_pair(&mut p, step, rot.c, rot.s);
    }

    Ok(GmdResult {
        q,
        r,
        p,
        sigma_bar,
    })
}

/// Geometric mean via log-domain averaging, stable for wide dynamic ranges.
fn geometric_mean(values: &[f64]) -> f64 {
    let mean_log = values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64;
    mean_log.exp()
}

/// Index of the largest (or smallest) trailing diagonal entry.
fn extreme_index(r: &[Vec<f64>], from: usize, to: usize, largest: bool) -> usize {
    let mut best = from;
    for i in (from + 1)..to {
        let better = if largest {
            r[i][i] > r[best][best]
        } else {
            r[i][i] < r[best][best]
        };
        if better {
            best = i;
        }
    }
    best
}

/// Swaps trailing positions `a` and `b` of `R` symmetrically and the
/// matching columns of `Q` and `P`.
fn symmetric_swap(r: &mut [Vec<f64>], q: &mut ComplexMatrix, p: &mut ComplexMatrix, a: usize, b: usize) {
    if a == b {
        return;
    }
    for row in r.iter_mut() {
        row.swap(a, b);
    }
    r.swap(a, b);
    swap_columns(q, a, b);
    swap_columns(p, a, b);
}

fn swap_columns(m: &mut ComplexMatrix, a: usize, b: usize) {
    for i in 0..m.rows() {
        let tmp = m.get(i, a);
        m.set(i, a, m.get(i, b));
        m.set(i, b, tmp);
    }
}

/// Applies a real Givens rotation to columns `j` and `j + 1`.
fn rotate_column_pair(m: &mut ComplexMatrix, j: usize, c: f64, s: f64) {
    for i in 0..m.rows() {
        let a = m.get(i, j);
        let b = m.get(i, j + 1);
        m.set(i, j, a * c + b * s);
        m.set(i, j + 1, b * c - a * s);
    }
}

struct PlaneRotation {
    /// Right rotation cosine/sine (applied to `P` and to columns of `R`).
    c: f64,
    s: f64,
    /// Left rotation cosine/sine (applied to `Q`).
    c1: f64,
    s1: f64,
    /// New off-diagonal entry at (step, step + 1).
    x: f64,
    /// New diagonal entry at (step + 1, step + 1).
    next: f64,
}

/// Rotation pair mapping `diag(d1, d2)` to `[[sb, x], [0, d1*d2/sb]]`
/// for `d2 <= sb <= d1`.
fn plane_rotation(d1: f64, d2: f64, sb: f64) -> PlaneRotation {
    let denom = d1 * d1 - d2 * d2;
    if denom <= 0.0 {
        return PlaneRotation {
            c: 1.0,
            s: 0.0,
            c1: 1.0,
            s1: 0.0,
            x: 0.0,
            next: d1 * d2 / sb,
        };
    }
    let c = (((sb * sb - d2 * d2) / denom).clamp(0.0, 1.0)).sqrt();
    let s = (1.0 - c * c).max(0.0).sqrt();
    let x = -c * s * denom / sb;
    let mut c1 = c * d1 / sb;
    let mut s1 = s * d2 / sb;
    let h = c1.hypot(s1);
    c1 /= h;
    s1 /= h;
    PlaneRotation {
        c,
        s,
        c1,
        s1,
        x,
        next: d1 * d2 / sb,
    }
}
