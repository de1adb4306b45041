//! Closed-loop MIMO transmit/receive chains.
//!
//! All schemes spread total transmit power one across `K` spatial streams,
//! sending `s = (1/sqrt(K)) P x` for a unit-energy symbol vector `x`:
//!
//! * `gmd-sic`: precode with the geometric mean decomposition and detect
//!   with successive interference cancellation, so every stream sees the
//!   same gain.
//! * `svd-eigenmode`: precode with the right singular vectors and detect
//!   each eigenmode independently with equal power per stream.
//! * `zf-vblast`: no precoding; zero-forcing nulling with ordered
//!   cancellation, strongest post-detection SNR first.

use crate::channel::ChannelRealization;
use crate::gmd::{gmd, GmdError, RANK_TOLERANCE};
use crate::linalg::{ComplexMatrix, LinalgError};
use crate::modem::Constellation;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Errors from chain preparation and per-frame processing.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransceiverError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("rank deficient channel: singular value {sigma:.3e} below {threshold:.3e}")]
    RankDeficient { sigma: f64, threshold: f64 },
    #[error("{scheme} requires tx <= rx antennas, got {tx}x{rx}")]
    UnsupportedGeometry {
        scheme: SchemeKind,
        tx: usize,
        rx: usize,
    },
}

impl From<GmdError> for TransceiverError {
    fn from(err: GmdError) -> Self {
        match err {
            GmdError::Linalg(e) => TransceiverError::Linalg(e),
            GmdError::RankDeficient {
                sigma, threshold, ..
            } => TransceiverError::RankDeficient { sigma, threshold },
        }
    }
}

/// Failure to parse a scheme name.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("unknown scheme {0:?}, expected gmd-sic, svd-eigenmode, or zf-vblast")]
pub struct ParseSchemeError(String);

/// Available transceiver chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    GmdSic,
    SvdEigenmode,
    ZfVblast,
}

impl SchemeKind {
    /// Builds the per-channel state for this scheme.
    ///
    /// Fails with [`TransceiverError::RankDeficient`] when the smallest
    /// singular value is below `1e-12` times the largest, and with
    /// [`TransceiverError::UnsupportedGeometry`] for `zf-vblast` when there
    /// are more transmit than receive antennas.
    pub fn prepare(&self, channel: &ChannelRealization) -> Result<Transceiver, TransceiverError> {
        let tx = channel.tx_antennas();
        let rx = channel.rx_antennas();
        let state = match self {
            SchemeKind::GmdSic => {
                let g = gmd(&channel.h)?;
                State::Gmd {
                    q_h: g.q.hermitian(),
                    r: g.r,
                    p: g.p,
                }
            }
            SchemeKind::SvdEigenmode => {
                let svd = channel.h.svd()?;
                check_rank(&svd.sigma)?;
                State::Svd {
                    u_h: svd.u.hermitian(),
                    sigma: svd.sigma,
                    v: svd.v,
                }
            }
            SchemeKind::ZfVblast => {
                if tx > rx {
                    return Err(TransceiverError::UnsupportedGeometry {
                        scheme: *self,
                        tx,
                        rx,
                    });
                }
                State::Zf {
                    layers: zf_detection_layers(&channel.h)?,
                }
            }
        };
        let k = state.streams(rx, tx);
        Ok(Transceiver {
            scheme: *self,
            tx,
            rx,
            k,
            state,
        })
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeKind::GmdSic => write!(f, "gmd-sic"),
            SchemeKind::SvdEigenmode => write!(f, "svd-eigenmode"),
            SchemeKind::ZfVblast => write!(f, "zf-vblast"),
        }
    }
}

impl FromStr for SchemeKind {
    type Err = ParseSchemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("gmd-sic") {
            Ok(SchemeKind::GmdSic)
        } else if s.eq_ignore_ascii_case("svd-eigenmode") {
            Ok(SchemeKind::SvdEigenmode)
        } else if s.eq_ignore_ascii_case("zf-vblast") {
            Ok(SchemeKind::ZfVblast)
        } else {
            Err(ParseSchemeError(s.to_string()))
        }
    }
}

/// Per-antenna transmit samples for one channel use.
#[derive(Debug, Clone, PartialEq)]
pub struct TxFrame {
    pub antenna_samples: Vec<Complex64>,
}

/// Hard decisions for one channel use, one constellation index per stream.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub symbol_indices: Vec<usize>,
}

/// One nulling-and-cancelling layer of the zero-forcing detector.
#[derive(Debug, Clone)]
struct ZfLayer {
    stream: usize,
    nulling_row: Vec<Complex64>,
    column: Vec<Complex64>,
}

#[derive(Debug, Clone)]
enum State {
    Gmd {
        q_h: ComplexMatrix,
        r: Vec<Vec<f64>>,
        p: ComplexMatrix,
    },
    Svd {
        u_h: ComplexMatrix,
        sigma: Vec<f64>,
        v: ComplexMatrix,
    },
    Zf {
        layers: Vec<ZfLayer>,
    },
}

impl State {
    fn streams(&self, rx: usize, tx: usize) -> usize {
        match self {
            State::Gmd { r, .. } => r.len(),
            State::Svd { sigma, .. } => sigma.len(),
            State::Zf { .. } => rx.min(tx),
        }
    }
}

/// A scheme bound to one channel realization.
#[derive(Debug, Clone)]
pub struct Transceiver {
    scheme: SchemeKind,
    tx: usize,
    rx: usize,
    k: usize,
    state: State,
}

impl Transceiver {
    pub fn scheme(&self) -> SchemeKind {
        self.scheme
    }

    /// Number of spatial streams `K`.
    pub fn streams(&self) -> usize {
        self.k
    }

    pub fn tx_antennas(&self) -> usize {
        self.tx
    }

    pub fn rx_antennas(&self) -> usize {
        self.rx
    }

    /// Stream indices in detection order, for ordered-cancellation schemes.
    pub fn detection_order(&self) -> Option<Vec<usize>> {
        match &self.state {
            State::Zf { layers } => Some(layers.iter().map(|l| l.stream).collect()),
            _ => None,
        }
    }

    /// Precodes one unit-energy symbol vector into antenna samples.
    pub fn transmit(&self, symbols: &[Complex64]) -> Result<TxFrame, TransceiverError> {
        if symbols.len() != self.k {
            return Err(dimension_error("transmit", self.k, symbols.len()));
        }
        let scale = (self.k as f64).sqrt().recip();
        let antenna_samples = match &self.state {
            State::Gmd { p, .. } => scaled(p.mul_vec(symbols)?, scale),
            State::Svd { v, .. } => scaled(v.mul_vec(symbols)?, scale),
            State::Zf { .. } => symbols.iter().map(|&x| x * scale).collect(),
        };
        Ok(TxFrame { antenna_samples })
    }

    /// Detects one received vector to hard symbol decisions.
    pub fn detect(
        &self,
        y: &[Complex64],
        constellation: Constellation,
    ) -> Result<DetectionResult, TransceiverError> {
        if y.len() != self.rx {
            return Err(dimension_error("detect", self.rx, y.len()));
        }
        let scale = (self.k as f64).sqrt().recip();
        let symbol_indices = match &self.state {
            State::Gmd { q_h, r, .. } => {
                // Back substitution: detect the last stream first, then
                // cancel each decision out of the earlier streams.
                let xt = q_h.mul_vec(y)?;
                let mut decided = vec![0usize; self.k];
                let mut points = vec![Complex64::ZERO; self.k];
                for i in (0..self.k).rev() {
                    let mut acc = xt[i];
                    for j in (i + 1)..self.k {
                        acc -= scale * r[i][j] * points[j];
                    }
                    let stat = acc / (scale * r[i][i]);
                    let idx = constellation.slice(stat);
                    decided[i] = idx;
                    points[i] = constellation.point(idx);
                }
                decided
            }
            State::Svd { u_h, sigma, .. } => {
                let z = u_h.mul_vec(y)?;
                z.iter()
                    .zip(sigma)
                    .map(|(zi, &si)| constellation.slice(zi / (scale * si)))
                    .collect()
            }
            State::Zf { layers } => {
                let mut residual = y.to_vec();
                let mut decided = vec![0usize; self.k];
                for layer in layers {
                    let stat: Complex64 = layer
                        .nulling_row
                        .iter()
                        .zip(&residual)
                        .map(|(w, r)| w * r)
                        .sum::<Complex64>()
                        / scale;
                    let idx = constellation.slice(stat);
                    decided[layer.stream] = idx;
                    let point = constellation.point(idx);
                    for (res, col) in residual.iter_mut().zip(&layer.column) {
                        *res -= scale * col * point;
                    }
                }
                decided
            }
        };
        Ok(DetectionResult { symbol_indices })
    }
}

fn scaled(v: Vec<Complex64>, scale: f64) -> Vec<Complex64> {
    v.into_iter().map(|z| z * scale).collect()
}

fn dimension_error(op: &'static str, expected: usize, got: usize) -> TransceiverError {
    TransceiverError::Linalg(LinalgError::DimensionMismatch {
        op,
        left_rows: expected,
        left_cols: 1,
        right_rows: got,
        right_cols: 1,
    })
}

fn check_rank(sigma: &[f64]) -> Result<(), TransceiverError> {
    let max = sigma.first().copied().unwrap_or(0.0);
    let threshold = RANK_TOLERANCE * max;
    for &s in sigma {
        if max == 0.0 || s < threshold {
            return Err(TransceiverError::RankDeficient {
                sigma: s,
                threshold,
            });
        }
    }
    Ok(())
}

/// Plans the zero-forcing detection order from the channel alone.
///
/// Each pass takes the pseudoinverse of the surviving columns, detects the
/// stream whose nulling row has the smallest norm (the best post-detection
/// SNR, lowest stream index on ties), and removes its column.
fn zf_detection_layers(h: &ComplexMatrix) -> Result<Vec<ZfLayer>, TransceiverError> {
    let m = h.rows();
    let mut active: Vec<usize> = (0..h.cols()).collect();
    let mut layers = Vec::with_capacity(active.len());
    while !active.is_empty() {
        let sub = ComplexMatrix::from_fn(m, active.len(), |i, j| h.get(i, active[j]));
        let svd = sub.svd()?;
        check_rank(&svd.sigma)?;
        let k = svd.sigma.len();
        // Row i of the pseudoinverse is sum_l V[i][l] / sigma_l * u_l^H;
        // with orthonormal u_l its norm falls out of V and sigma alone.
        let row_norm_sqr = |i: usize| -> f64 {
            (0..k)
                .map(|l| svd.v.get(i, l).norm_sqr() / (svd.sigma[l] * svd.sigma[l]))
                .sum()
        };
        let mut best = 0;
        for i in 1..active.len() {
            if row_norm_sqr(i) < row_norm_sqr(best) {
                best = i;
            }
        }
        let nulling_row: Vec<Complex64> = (0..m)
            .map(|j| {
                (0..k)
                    .map(|l| svd.v.get(best, l) / svd.sigma[l] * svd.u.get(j, l).conj())
                    .sum()
            })
            .collect();
        let stream = active[best];
        layers.push(ZfLayer {
            stream,
            nulling_row,
            column: h.col(stream),
        });
        active.remove(best);
    }
    Ok(layers)
}
