//! Deterministic parallel Monte Carlo BER measurement.
//!
//! A campaign runs `trials` independent channel draws; each trial sends
//! `frames_per_trial` symbol vectors through the same channel realization
//! at every SNR point, with the noise and payload substreams restarted per
//! point so all points see common random numbers. Trials are reduced with
//! integer counters, so results do not depend on worker count or
//! scheduling, only on the configuration and master seed.

use crate::channel::{self, ChannelRealization, NoiseSpec, StreamRole};
use crate::modem::Constellation;
use crate::transceiver::{SchemeKind, Transceiver, TransceiverError};
use num_complex::Complex64;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Critical value for the 95% score confidence interval.
const WILSON_Z: f64 = 1.959963984540054;

/// Channel draws attempted per trial before giving up on rank.
const MAX_CHANNEL_DRAWS: u32 = 10;

/// Errors from campaign configuration and execution.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Transceiver(#[from] TransceiverError),
    #[error("trial {trial}: no full-rank channel in {attempts} draws")]
    ChannelDegenerate { trial: u64, attempts: u32 },
}

/// One simulated operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub tx: usize,
    pub rx: usize,
    pub scheme: SchemeKind,
    pub constellation: Constellation,
    pub trials: u64,
    pub frames_per_trial: u32,
    pub master_seed: u64,
}

impl ScenarioConfig {
    /// Spatial streams carried per channel use.
    pub fn streams(&self) -> usize {
        self.tx.min(self.rx)
    }

    /// Payload bits sent per trial at each SNR point.
    pub fn bits_per_trial(&self) -> u64 {
        u64::from(self.frames_per_trial)
            * self.streams() as u64
            * self.constellation.bits_per_symbol() as u64
    }

    fn validate(&self, snr_db_points: &[f64]) -> Result<(), EngineError> {
        let fail = |msg: &str| Err(EngineError::InvalidConfig(msg.to_string()));
        if self.tx == 0 || self.rx == 0 {
            return fail("antenna counts must be positive");
        }
        if self.trials == 0 {
            return fail("trials must be positive");
        }
        if self.frames_per_trial == 0 {
            return fail("frames per trial must be positive");
        }
        if snr_db_points.is_empty() {
            return fail("at least one SNR point is required");
        }
        if snr_db_points.iter().any(|s| !s.is_finite()) {
            return fail("SNR points must be finite");
        }
        Ok(())
    }
}

/// Measured BER at one SNR point with a 95% score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub snr_db: f64,
    pub bits: u64,
    pub errors: u64,
    pub ber: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Full sweep result for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerCurve {
    pub config: ScenarioConfig,
    pub snr_db_points: Vec<f64>,
    pub points: Vec<BerPoint>,
    /// Extra channel draws spent replacing rank-deficient realizations.
    pub redraws: u64,
}

struct TrialCounts {
    errors: Vec<u64>,
    redraws: u64,
}

impl TrialCounts {
    fn zero(n_points: usize) -> Self {
        Self {
            errors: vec![0; n_points],
            redraws: 0,
        }
    }

    fn merge(mut self, other: TrialCounts) -> Self {
        for (a, b) in self.errors.iter_mut().zip(&other.errors) {
            *a += b;
        }
        self.redraws += other.redraws;
        self
    }
}

/// Per-trial error counts alongside the aggregate curve.
///
/// Frames within a trial share one channel draw, so bit errors cluster by
/// trial; `trial_errors[trial][point]` supports trial-level variance
/// estimates that plain per-point totals cannot.
#[derive(Debug, Clone, PartialEq)]
pub struct DetailedBerCurve {
    pub curve: BerCurve,
    pub trial_errors: Vec<Vec<u64>>,
}

/// Runs a BER sweep over `snr_db_points`.
pub fn run(config: &ScenarioConfig, snr_db_points: &[f64]) -> Result<BerCurve, EngineError> {
    config.validate(snr_db_points)?;
    let n_points = snr_db_points.len();
    let counts = (0..config.trials)
        .into_par_iter()
        .map(|trial| trial_counts(config, snr_db_points, trial))
        .try_reduce(|| TrialCounts::zero(n_points), |a, b| Ok(a.merge(b)))?;
    Ok(curve_from_counts(config, snr_db_points, &counts))
}

/// Like [`run`], also keeping each trial's error counts.
pub fn run_detailed(
    config: &ScenarioConfig,
    snr_db_points: &[f64],
) -> Result<DetailedBerCurve, EngineError> {
    config.validate(snr_db_points)?;
    let per_trial: Vec<TrialCounts> = (0..config.trials)
        .into_par_iter()
        .map(|trial| trial_counts(config, snr_db_points, trial))
        .collect::<Result<_, _>>()?;
    let totals = per_trial.iter().fold(
        TrialCounts::zero(snr_db_points.len()),
        |mut acc, t| {
            for (a, b) in acc.errors.iter_mut().zip(&t.errors) {
                *a += b;
            }
            acc.redraws += t.redraws;
            acc
        },
    );
    Ok(DetailedBerCurve {
        curve: curve_from_counts(config, snr_db_points, &totals),
        trial_errors: per_trial.into_iter().map(|t| t.errors).collect(),
    })
}

fn curve_from_counts(
    config: &ScenarioConfig,
    snr_db_points: &[f64],
    counts: &TrialCounts,
) -> BerCurve {
    let bits_per_point = config.trials * config.bits_per_trial();
    let points = snr_db_points
        .iter()
        .zip(&counts.errors)
        .map(|(&snr_db, &errors)| {
            let (ci_low, ci_high) = wilson_interval(errors, bits_per_point);
            BerPoint {
                snr_db,
                bits: bits_per_point,
                errors,
                ber: errors as f64 / bits_per_point as f64,
                ci_low,
                ci_high,
            }
        })
        .collect();
    BerCurve {
        config: *config,
        snr_db_points: snr_db_points.to_vec(),
        points,
        redraws: counts.redraws,
    }
}

/// Draws channels for one trial until one has full rank.
fn prepare_trial(
    config: &ScenarioConfig,
    trial: u64,
) -> Result<(ChannelRealization, Transceiver, u64), EngineError> {
    let mut rng = channel::substream_rng(config.master_seed, trial, StreamRole::Channel);
    for attempt in 0..MAX_CHANNEL_DRAWS {
        let realization = channel::draw_channel(config.rx, config.tx, &mut rng);
        match config.scheme.prepare(&realization) {
            Ok(t) => return Ok((realization, t, u64::from(attempt))),
            Err(TransceiverError::RankDeficient { .. }) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(EngineError::ChannelDegenerate {
        trial,
        attempts: MAX_CHANNEL_DRAWS,
    })
}

/// Bit-error counts for one trial at every SNR point.
fn trial_counts(
    config: &ScenarioConfig,
    snr_db_points: &[f64],
    trial: u64,
) -> Result<TrialCounts, EngineError> {
    let (realization, transceiver, redraws) = prepare_trial(config, trial)?;
    let k = transceiver.streams();
    let constellation = config.constellation;
    let bps = constellation.bits_per_symbol();
    let mask = (1u64 << bps) - 1;

    let mut counts = TrialCounts::zero(snr_db_points.len());
    counts.redraws = redraws;
    let mut tx_indices = vec![0usize; k];
    let mut symbols = vec![Complex64::ZERO; k];

    for (point_idx, &snr_db) in snr_db_points.iter().enumerate() {
        // Restart the payload and noise substreams at each SNR point so the
        // whole sweep shares one set of random draws.
        let mut bits_rng = channel::substream_rng(config.master_seed, trial, StreamRole::Bits);
        let mut noise_rng = channel::substream_rng(config.master_seed, trial, StreamRole::Noise);
        let noise_spec = NoiseSpec::from_snr_db(snr_db);
        for _ in 0..config.frames_per_trial {
            let word = bits_rng.next_u64();
            for (i, idx) in tx_indices.iter_mut().enumerate() {
                *idx = ((word >> (i * bps)) & mask) as usize;
                symbols[i] = constellation.point(*idx);
            }
            let frame = transceiver.transmit(&symbols)?;
            let noise = channel::draw_noise(config.rx, &noise_spec, &mut noise_rng);
            let y = channel::apply_channel(&realization.h, &frame.antenna_samples, &noise)
                .map_err(TransceiverError::from)?;
            let detected = transceiver.detect(&y, constellation)?;
            let frame_errors: u32 = detected
                .symbol_indices
                .iter()
                .zip(&tx_indices)
                .map(|(&rx_idx, &tx_idx)| (rx_idx ^ tx_idx).count_ones())
                .sum();
            counts.errors[point_idx] += u64::from(frame_errors);
        }
    }
    Ok(counts)
}

/// 95% Wilson score interval for `errors` out of `total` Bernoulli draws.
///
/// Zero observed errors pin the lower bound to exactly 0 and all-errors pin
/// the upper bound to exactly 1.
pub fn wilson_interval(errors: u64, total: u64) -> (f64, f64) {
    if total == 0 {
        return (0.0, 1.0);
    }
    let n = total as f64;
    let p = errors as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let low = if errors == 0 {
        0.0
    } else {
        (center - half).max(0.0)
    };
    let high = if errors == total {
        1.0
    } else {
        (center + half).min(1.0)
    };
    (low, high)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_config() -> ScenarioConfig {
        ScenarioConfig {
            tx: 2,
            rx: 2,
            scheme: SchemeKind::GmdSic,
            constellation: Constellation::Qpsk,
            trials: 200,
            frames_per_trial: 20,
            master_seed: 77,
        }
    }

    #[test]
    fn wilson_interval_edge_guards() {
        let (low, high) = wilson_interval(0, 100);
        assert_eq!(low, 0.0);
        assert_abs_diff_eq!(high, 0.0369935, epsilon = 1e-6);
        let (low, high) = wilson_interval(100, 100);
        assert_eq!(high, 1.0);
        assert!(low > 0.9);
        assert_eq!(wilson_interval(0, 0), (0.0, 1.0));
    }

    #[test]
    fn wilson_interval_is_symmetric_at_half() {
        let (low, high) = wilson_interval(50, 100);
        assert_abs_diff_eq!(low + high, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(low, 0.403832, epsilon = 1e-5);
        assert_abs_diff_eq!(high, 0.596168, epsilon = 1e-5);
    }

    #[test]
    fn wilson_interval_contains_the_estimate() {
        for (errors, total) in [(1u64, 50u64), (7, 200), (123, 4567), (4566, 4567)] {
            let (low, high) = wilson_interval(errors, total);
            let p = errors as f64 / total as f64;
            assert!(low < p && p < high, "{errors}/{total}: [{low}, {high}]");
            assert!((0.0..=1.0).contains(&low));
            assert!((0.0..=1.0).contains(&high));
        }
    }

    #[test]
    fn results_are_reproducible_and_thread_count_invariant() {
        let config = small_config();
        let snr = [4.0, 12.0];
        let a = run(&config, &snr).unwrap();
        let b = run(&config, &snr).unwrap();
        assert_eq!(a, b);
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run(&config, &snr).unwrap());
        assert_eq!(a, single);
    }

    #[test]
    fn bit_accounting_is_exact() {
        let config = small_config();
        let curve = run(&config, &[10.0]).unwrap();
        assert_eq!(curve.points[0].bits, 200 * 20 * 2 * 2);
        assert!(curve.points[0].errors <= curve.points[0].bits);
    }

    #[test]
    fn ber_decreases_with_snr() {
        let config = small_config();
        let curve = run(&config, &[0.0, 20.0]).unwrap();
        assert!(
            curve.points[0].ber > curve.points[1].ber,
            "{} vs {}",
            curve.points[0].ber,
            curve.points[1].ber
        );
    }

    #[test]
    fn effectively_noiseless_sweep_sees_zero_errors() {
        let mut config = small_config();
        config.trials = 50;
        let curve = run(&config, &[300.0]).unwrap();
        assert_eq!(curve.points[0].errors, 0);
        assert_eq!(curve.points[0].ber, 0.0);
        assert_eq!(curve.points[0].ci_low, 0.0);
    }

    #[test]
    fn siso_rayleigh_matches_the_closed_form() {
        let config = ScenarioConfig {
            tx: 1,
            rx: 1,
            scheme: SchemeKind::SvdEigenmode,
            constellation: Constellation::Qpsk,
            trials: 800,
            frames_per_trial: 50,
            master_seed: 3,
        };
        let curve = run(&config, &[8.0]).unwrap();
        let gamma = 10f64.powf(0.8) / 2.0;
        let analytic = 0.5 * (1.0 - (gamma / (1.0 + gamma)).sqrt());
        // Bits cluster by channel draw, so bound the sampling error at the
        // trial level; one shared draw per trial is the worst case.
        let tol = 3.0 * (analytic * (1.0 - analytic) / config.trials as f64).sqrt();
        assert!(
            (curve.points[0].ber - analytic).abs() < tol,
            "measured {} analytic {analytic} tol {tol}",
            curve.points[0].ber
        );
    }

    #[test]
    fn detailed_run_agrees_with_aggregate_run() {
        let config = small_config();
        let snr = [2.0, 14.0];
        let plain = run(&config, &snr).unwrap();
        let detailed = run_detailed(&config, &snr).unwrap();
        assert_eq!(plain, detailed.curve);
        assert_eq!(detailed.trial_errors.len() as u64, config.trials);
        for (point_idx, point) in plain.points.iter().enumerate() {
            let sum: u64 = detailed
                .trial_errors
                .iter()
                .map(|trial| trial[point_idx])
                .sum();
            assert_eq!(sum, point.errors);
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = small_config();
        c.trials = 0;
        assert!(matches!(
            run(&c, &[1.0]),
            Err(EngineError::InvalidConfig(_))
        ));
        let c = small_config();
        assert!(matches!(run(&c, &[]), Err(EngineError::InvalidConfig(_))));
        assert!(matches!(
            run(&c, &[f64::NAN]),
            Err(EngineError::InvalidConfig(_))
        ));
        let mut c = small_config();
        c.tx = 0;
        assert!(matches!(
            run(&c, &[1.0]),
            Err(EngineError::InvalidConfig(_))
        ));
    }

    #[test]
    fn unsupported_geometry_surfaces_from_run() {
        let config = ScenarioConfig {
            tx: 4,
            rx: 2,
            scheme: SchemeKind::ZfVblast,
            constellation: Constellation::Qpsk,
            trials: 4,
            frames_per_trial: 2,
            master_seed: 0,
        };
        assert!(matches!(
            run(&config, &[10.0]),
            Err(EngineError::Transceiver(
                TransceiverError::UnsupportedGeometry { .. }
            ))
        ));
    }
}
