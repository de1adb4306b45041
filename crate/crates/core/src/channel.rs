//! Rayleigh block-fading channel, receiver noise, and reproducible
//! random substreams.
//!
//! Every random quantity in a campaign comes from a counter-derived
//! ChaCha8 substream keyed by (master seed, trial index, role). Trials are
//! therefore independent of each other, of worker scheduling, and of the
//! SNR grid: the same trial reuses the same channel, noise, and data
//! streams at every SNR point.

use crate::linalg::{ComplexMatrix, LinalgError};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from noise specification and application.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("noise power must be positive and finite, got {n0}")]
    NonpositiveNoise { n0: f64 },
}

/// Independent random streams drawn within one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamRole {
    /// Channel matrix entries.
    Channel = 0,
    /// Receiver noise samples.
    Noise = 1,
    /// Payload bits.
    Bits = 2,
}

/// 32-byte ChaCha8 seed: master seed, trial, role, and a zero pad, each as
/// a little-endian u64.
fn substream_seed(master_seed: u64, trial: u64, role: StreamRole) -> [u8; 32] {
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&trial.to_le_bytes());
    seed[16..24].copy_from_slice(&(role as u64).to_le_bytes());
    seed
}

/// Deterministic generator for one (trial, role) substream.
pub fn substream_rng(master_seed: u64, trial: u64, role: StreamRole) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(substream_seed(master_seed, trial, role))
}

/// One flat-fading channel draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// `rx x tx` matrix of complex gains.
    pub h: ComplexMatrix,
    /// Which Monte Carlo trial this draw belongs to.
    pub trial_index: u64,
}

impl ChannelRealization {
    pub fn rx_antennas(&self) -> usize {
        self.h.rows()
    }

    pub fn tx_antennas(&self) -> usize {
        self.h.cols()
    }

    /// Number of spatial streams the channel can carry.
    pub fn streams(&self) -> usize {
        self.rx_antennas().min(self.tx_antennas())
    }
}

/// Draws an `rx x tx` matrix of i.i.d. unit-variance circular complex
/// Gaussians, row-major, real part before imaginary part.
pub fn draw_channel(
    rx: usize,
    tx: usize,
    trial_index: u64,
    rng: &mut impl Rng,
) -> ChannelRealization {
    let scale = 0.5f64.sqrt();
    let h = ComplexMatrix::from_fn(rx, tx, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    });
    ChannelRealization { h, trial_index }
}

/// Per-antenna noise power for an SNR under unit total transmit power.
pub fn snr_to_n0(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Noise level for one operating point.
///
/// The total transmit power is fixed at one, so the per-antenna complex
/// noise power is `n0 = 10^(-snr_db / 10)` and `snr_db = 10 log10(1 / n0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub n0: f64,
}

impl NoiseSpec {
    pub fn from_snr_db(snr_db: f64) -> Self {
        Self {
            snr_db,
            n0: snr_to_n0(snr_db),
        }
    }

    /// Specifies the noise by linear power directly.
    pub fn from_n0(n0: f64) -> Result<Self, ChannelError> {
        if !(n0 > 0.0) || !n0.is_finite() {
            return Err(ChannelError::NonpositiveNoise { n0 });
        }
        Ok(Self {
            snr_db: 10.0 * (1.0 / n0).log10(),
            n0,
        })
    }

    /// Standard deviation of each real noise component.
    pub fn component_std(&self) -> f64 {
        (self.n0 / 2.0).sqrt()
    }
}

/// Adds i.i.d. circular complex Gaussian noise of power `n0` to each entry,
/// drawing real part before imaginary part.
pub fn add_noise(
    y: &[Complex64],
    spec: &NoiseSpec,
    rng: &mut impl Rng,
) -> Result<Vec<Complex64>, ChannelError> {
    if !(spec.n0 > 0.0) || !spec.n0.is_finite() {
        return Err(ChannelError::NonpositiveNoise { n0: spec.n0 });
    }
    let std = spec.component_std();
    Ok(y.iter()
        .map(|&yi| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            yi + Complex64::new(re * std, im * std)
        })
        .collect())
}

/// Received vector `y = H s + n` for an explicit noise vector.
pub fn apply_channel(
    h: &ComplexMatrix,
    s: &[Complex64],
    noise: &[Complex64],
) -> Result<Vec<Complex64>, LinalgError> {
    if noise.len() != h.rows() {
        return Err(LinalgError::DimensionMismatch {
            op: "apply_channel",
            left_rows: h.rows(),
            left_cols: h.cols(),
            right_rows: noise.len(),
            right_cols: 1,
        });
    }
    let mut y = h.mul_vec(s)?;
    for (yi, ni) in y.iter_mut().zip(noise) {
        *yi += ni;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::RngCore;

    #[test]
    fn seed_layout_is_three_le_words_and_zero_pad() {
        let seed = substream_seed(0x0102030405060708, 3, StreamRole::Bits);
        assert_eq!(&seed[0..8], &[8, 7, 6, 5, 4, 3, 2, 1]);
        assert_eq!(&seed[8..16], &[3, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&seed[16..24], &[2, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&seed[24..32], &[0u8; 8]);
    }

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let a: Vec<u64> = {
            let mut rng = substream_rng(7, 11, StreamRole::Channel);
            (0..4).map(|_| rng.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut rng = substream_rng(7, 11, StreamRole::Channel);
            (0..4).map(|_| rng.next_u64()).collect()
        };
        assert_eq!(a, b);
        let mut other_trial = substream_rng(7, 12, StreamRole::Channel);
        let mut other_role = substream_rng(7, 11, StreamRole::Noise);
        assert_ne!(a[0], other_trial.next_u64());
        assert_ne!(a[0], other_role.next_u64());
    }

    #[test]
    fn channel_draws_repeat_under_a_fresh_stream() {
        let a = draw_channel(2, 2, 5, &mut substream_rng(42, 5, StreamRole::Channel));
        let b = draw_channel(2, 2, 5, &mut substream_rng(42, 5, StreamRole::Channel));
        assert_eq!(a, b);
        assert_eq!(a.trial_index, 5);
    }

    #[test]
    fn channel_draw_order_is_row_major_re_then_im() {
        let mut rng = substream_rng(42, 0, StreamRole::Channel);
        let mut reference = substream_rng(42, 0, StreamRole::Channel);
        let ch = draw_channel(2, 3, 0, &mut rng);
        let scale = 0.5f64.sqrt();
        for i in 0..2 {
            for j in 0..3 {
                let re: f64 = reference.sample(StandardNormal);
                let im: f64 = reference.sample(StandardNormal);
                assert_eq!(ch.h.get(i, j), Complex64::new(re * scale, im * scale));
            }
        }
    }

    #[test]
    fn noise_power_follows_snr() {
        assert_abs_diff_eq!(snr_to_n0(0.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(snr_to_n0(10.0), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(snr_to_n0(3.0), 0.501187, epsilon = 1e-6);
        let spec = NoiseSpec::from_snr_db(10.0);
        assert_abs_diff_eq!(spec.n0, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn noise_spec_from_linear_power() {
        let spec = NoiseSpec::from_n0(2.0).unwrap();
        assert_abs_diff_eq!(spec.snr_db, -10.0 * 2f64.log10(), epsilon = 1e-12);
        assert_eq!(
            NoiseSpec::from_n0(0.0).unwrap_err(),
            ChannelError::NonpositiveNoise { n0: 0.0 }
        );
        assert!(NoiseSpec::from_n0(-1.0).is_err());
        assert!(NoiseSpec::from_n0(f64::NAN).is_err());
    }

    #[test]
    fn added_noise_has_requested_power() {
        let spec = NoiseSpec::from_snr_db(10.0);
        let mut rng = substream_rng(5, 2, StreamRole::Noise);
        let zeros = vec![Complex64::ZERO; 4000];
        let samples = add_noise(&zeros, &spec, &mut rng).unwrap();
        let mean_power: f64 =
            samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / samples.len() as f64;
        assert!(
            (mean_power - 0.1).abs() < 0.01,
            "mean noise power {mean_power}"
        );
    }

    #[test]
    fn vanishing_noise_leaves_input_untouched() {
        let spec = NoiseSpec::from_n0(1e-30).unwrap();
        let y = vec![Complex64::new(1.0, -2.0), Complex64::new(0.25, 0.5)];
        let mut rng = substream_rng(1, 0, StreamRole::Noise);
        let out = add_noise(&y, &spec, &mut rng).unwrap();
        for (a, b) in out.iter().zip(&y) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn add_noise_rejects_degenerate_spec() {
        let bad = NoiseSpec {
            snr_db: 0.0,
            n0: -0.5,
        };
        let mut rng = substream_rng(1, 0, StreamRole::Noise);
        assert!(matches!(
            add_noise(&[Complex64::ZERO], &bad, &mut rng),
            Err(ChannelError::NonpositiveNoise { .. })
        ));
    }

    #[test]
    fn apply_channel_identity_plus_noise() {
        let h = ComplexMatrix::identity(2);
        let s = vec![Complex64::new(1.0, -1.0), Complex64::new(0.5, 2.0)];
        let n = vec![Complex64::new(0.25, 0.0), Complex64::new(0.0, -0.25)];
        let y = apply_channel(&h, &s, &n).unwrap();
        assert_eq!(y[0], Complex64::new(1.25, -1.0));
        assert_eq!(y[1], Complex64::new(0.5, 1.75));
        assert!(apply_channel(&h, &s, &n[..1]).is_err());
        assert!(apply_channel(&h, &s[..1], &n).is_err());
    }
}
