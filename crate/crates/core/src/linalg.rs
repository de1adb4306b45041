//! Dense complex matrices and a one-sided Jacobi SVD.
//!
//! Everything here targets the small dimensions a link-level simulator needs
//! (a handful of antennas); the decompositions favor accuracy and determinism
//! over large-matrix throughput.

use num_complex::Complex64;
use thiserror::Error;

/// Maximum number of Jacobi sweeps before the SVD gives up.
const SVD_SWEEP_LIMIT: usize = 60;
/// Relative off-diagonal Gram threshold for SVD convergence.
const SVD_OFFDIAG_TOL: f64 = 1e-14;

/// Errors from matrix construction and decomposition.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    DimensionMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("matrix dimensions must be positive, got {rows}x{cols}")]
    EmptyDimensions { rows: usize, cols: usize },
    #[error("{got} entries provided for a {rows}x{cols} matrix")]
    EntryCountMismatch { rows: usize, cols: usize, got: usize },
    #[error("non-finite entry at ({row},{col})")]
    NonFiniteEntry { row: usize, col: usize },
    #[error("SVD did not converge after {sweeps} sweeps (max relative off-diagonal {residual:.3e})")]
    NoConvergence { sweeps: usize, residual: f64 },
}

/// Dense complex matrix in row-major order.
///
/// Dimensions are positive and every entry is finite; both are checked at
/// construction so downstream code never sees NaN or Inf.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::EmptyDimensions { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(LinalgError::EntryCountMismatch {
                rows,
                cols,
                got: data.len(),
            });
        }
        for (idx, z) in data.iter().enumerate() {
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(LinalgError::NonFiniteEntry {
                    row: idx / cols,
                    col: idx % cols,
                });
            }
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self, LinalgError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(LinalgError::EntryCountMismatch {
                    rows: r,
                    cols: c,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(r, c, data)
    }

    /// Builds a matrix by evaluating `f(row, col)` in row-major order.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |_, _| Complex64::ZERO)
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::ONE
            } else {
                Complex64::ZERO
            }
        })
    }

    /// Square matrix with the given real diagonal.
    pub fn from_real_diag(diag: &[f64]) -> Self {
        assert!(!diag.is_empty(), "diagonal must be non-empty");
        Self::from_fn(diag.len(), diag.len(), |i, j| {
            if i == j {
                Complex64::new(diag[i], 0.0)
            } else {
                Complex64::ZERO
            }
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.cols + col] = value;
    }

    /// Row-major view of the entries.
    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    /// Copy of column `j`.
    pub fn col(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Standard matrix product.
    pub fn mul(&self, other: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch {
                op: "matmul",
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        let mut out = ComplexMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                for j in 0..other.cols {
                    let v = out.get(i, j) + a * other.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, x: &[Complex64]) -> Result<Vec<Complex64>, LinalgError> {
        if self.cols != x.len() {
            return Err(LinalgError::DimensionMismatch {
                op: "matvec",
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: x.len(),
                right_cols: 1,
            });
        }
        Ok((0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * x[j]).sum())
            .collect())
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    /// Entrywise difference.
    pub fn sub(&self, other: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(LinalgError::DimensionMismatch {
                op: "sub",
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        Ok(ComplexMatrix::from_fn(self.rows, self.cols, |i, j| {
            self.get(i, j) - other.get(i, j)
        }))
    }

    /// Entrywise scaling by a complex factor.
    pub fn scale(&self, factor: Complex64) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j) * factor)
    }

    /// Square root of the sum of squared entry magnitudes.
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Singular value decomposition `A = U diag(sigma) V^H`.
    ///
    /// Uses cyclic one-sided Jacobi rotations on the columns (of `A^H` when
    /// the input is wide), so all `min(rows, cols)` singular values are
    /// returned, zeros included. Right singular vectors carry a fixed phase
    /// convention: the first entry with magnitude above 1e-12 is made real
    /// nonnegative, which keeps the output deterministic.
    pub fn svd(&self) -> Result<SvdResult, LinalgError> {
        let wide = self.rows < self.cols;
        let work = if wide { self.hermitian() } else { self.clone() };
        let (u, sigma, v) = jacobi_svd_tall(&work)?;
        let (mut u, mut v) = if wide { (v, u) } else { (u, v) };
        // Phase convention: rotate each (u_j, v_j) pair by the same unit
        // factor, which leaves u diag(sigma) v^H unchanged.
        for j in 0..sigma.len() {
            let lead = (0..v.rows()).map(|i| v.get(i, j)).find(|z| z.norm() > 1e-12);
            if let Some(z) = lead {
                let phase = z.conj() / z.norm();
                for i in 0..v.rows() {
                    let w = v.get(i, j) * phase;
                    v.set(i, j, w);
                }
                for i in 0..u.rows() {
                    let w = u.get(i, j) * phase;
                    u.set(i, j, w);
                }
            }
        }
        Ok(SvdResult { u, sigma, v })
    }

    /// Ratio of largest to smallest singular value.
    ///
    /// Returns `f64::INFINITY` when the smallest singular value is zero.
    pub fn condition_number(&self) -> Result<f64, LinalgError> {
        let s = self.svd()?.sigma;
        let max = s.first().copied().unwrap_or(0.0);
        let min = s.last().copied().unwrap_or(0.0);
        if min == 0.0 {
            Ok(f64::INFINITY)
        } else {
            Ok(max / min)
        }
    }
}

/// Result of [`ComplexMatrix::svd`].
///
/// `u` is rows x K, `v` is cols x K, and `sigma` holds the K = min(rows,
/// cols) singular values in descending order.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: ComplexMatrix,
    pub sigma: Vec<f64>,
    pub v: ComplexMatrix,
}

impl SvdResult {
    /// Recomputes `U diag(sigma) V^H`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let k = self.sigma.len();
        ComplexMatrix::from_fn(self.u.rows(), self.v.rows(), |i, j| {
            (0..k)
                .map(|l| self.u.get(i, l) * self.sigma[l] * self.v.get(j, l).conj())
                .sum()
        })
    }
}

fn norm_sqr(col: &[Complex64]) -> f64 {
    col.iter().map(|z| z.norm_sqr()).sum()
}

fn dot_h(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// One-sided Jacobi SVD for a tall or square matrix (rows >= cols).
///
/// Columns of a working copy are rotated pairwise until mutually orthogonal;
/// their norms are the singular values and the accumulated rotations form V.
fn jacobi_svd_tall(
    a: &ComplexMatrix,
) -> Result<(ComplexMatrix, Vec<f64>, ComplexMatrix), LinalgError> {
    let m = a.rows();
    let n = a.cols();
    debug_assert!(m >= n);
    let mut w: Vec<Vec<Complex64>> = (0..n).map(|j| a.col(j)).collect();
    let mut v: Vec<Vec<Complex64>> = (0..n)
        .map(|j| {
            (0..n)
                .map(|i| {
                    if i == j {
                        Complex64::ONE
                    } else {
                        Complex64::ZERO
                    }
                })
                .collect()
        })
        .collect();

    let mut converged = false;
    for _ in 0..SVD_SWEEP_LIMIT {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let app = norm_sqr(&w[p]);
                let aqq = norm_sqr(&w[q]);
                let apq = dot_h(&w[p], &w[q]);
                if apq.norm_sqr() <= SVD_OFFDIAG_TOL * SVD_OFFDIAG_TOL * app * aqq {
                    continue;
                }
                rotated = true;
                let g = apq.norm();
                // Unit factor that makes the Gram off-diagonal real positive.
                let phase_conj = apq.conj() / g;
                let tau = (aqq - app) / (2.0 * g);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for i in 0..m {
                    let wp = w[p][i];
                    let wq = w[q][i] * phase_conj;
                    w[p][i] = c * wp - s * wq;
                    w[q][i] = s * wp + c * wq;
                }
                for i in 0..n {
                    let vp = v[p][i];
                    let vq = v[q][i] * phase_conj;
                    v[p][i] = c * vp - s * vq;
                    v[q][i] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        let mut residual: f64 = 0.0;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let denom = (norm_sqr(&w[p]) * norm_sqr(&w[q])).sqrt();
                if denom > 0.0 {
                    residual = residual.max(dot_h(&w[p], &w[q]).norm() / denom);
                }
            }
        }
        if residual > SVD_OFFDIAG_TOL {
            return Err(LinalgError::NoConvergence {
                sweeps: SVD_SWEEP_LIMIT,
                residual,
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = w.iter().map(|col| norm_sqr(col).sqrt()).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());

    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let v_mat = ComplexMatrix::from_fn(n, n, |i, j| v[order[j]][i]);

    let mut u_cols: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    for (rank, &j) in order.iter().enumerate() {
        if sigma[rank] > 1e-300 {
            u_cols.push(w[j].iter().map(|z| z / sigma[rank]).collect());
        } else {
            u_cols.push(complete_basis_column(m, &u_cols));
        }
    }
    let u_mat = ComplexMatrix::from_fn(m, n, |i, j| u_cols[j][i]);
    Ok((u_mat, sigma, v_mat))
}

/// Deterministically extends an orthonormal set by one column, used for the
/// left vectors of zero singular values.
fn complete_basis_column(m: usize, existing: &[Vec<Complex64>]) -> Vec<Complex64> {
    for b in 0..m {
        let mut cand: Vec<Complex64> = (0..m)
            .map(|i| {
                if i == b {
                    Complex64::ONE
                } else {
                    Complex64::ZERO
                }
            })
            .collect();
        for col in existing {
            let proj = dot_h(col, &cand);
            for i in 0..m {
                cand[i] -= proj * col[i];
            }
        }
        let norm = norm_sqr(&cand).sqrt();
        if norm > 0.5 {
            return cand.iter().map(|z| z / norm).collect();
        }
    }
    unreachable!("orthonormal set of size < m always leaves a basis vector free")
}
