//! Gray-mapped QPSK and 16-QAM with unit average symbol energy.
//!
//! Bit groups are taken least-significant-first: bit `i` of a symbol index
//! is the `i`-th bit of the group. QPSK sends bit 0 on the in-phase axis and
//! bit 1 on quadrature, with a 0 bit mapping to the positive half. 16-QAM
//! sends the first two bits of the group on the in-phase axis and the last
//! two on quadrature; within an axis the written pair follows the Gray
//! sequence 00, 01, 11, 10 across levels -3, -1, +1, +3.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// QPSK scale: both coordinates are `1/sqrt(2)` in magnitude.
const QPSK_SCALE: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Errors from bit-level modulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModemError {
    #[error("bit value {value} at index {index} is not 0 or 1")]
    InvalidBit { index: usize, value: u8 },
    #[error("{len} bits is not a multiple of {bits_per_symbol}")]
    PartialSymbol { len: usize, bits_per_symbol: usize },
}

/// Failure to parse a constellation name.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("unknown constellation {0:?}, expected qpsk or qam16")]
pub struct ParseConstellationError(String);

/// Supported symbol constellations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constellation {
    Qpsk,
    Qam16,
}

impl Constellation {
    /// Bits carried by one symbol.
    pub fn bits_per_symbol(&self) -> usize {
        match self {
            Constellation::Qpsk => 2,
            Constellation::Qam16 => 4,
        }
    }

    /// Number of constellation points.
    pub fn size(&self) -> usize {
        1 << self.bits_per_symbol()
    }

    /// Point for a symbol index (bit `i` of the index is group bit `i`).
    pub fn point(&self, index: usize) -> Complex64 {
        debug_assert!(index < self.size());
        match self {
            Constellation::Qpsk => {
                let re = if index & 1 == 0 { QPSK_SCALE } else { -QPSK_SCALE };
                let im = if index & 2 == 0 { QPSK_SCALE } else { -QPSK_SCALE };
                Complex64::new(re, im)
            }
            Constellation::Qam16 => {
                let re = qam16_level(index & 1, (index >> 1) & 1);
                let im = qam16_level((index >> 2) & 1, (index >> 3) & 1);
                Complex64::new(re, im)
            }
        }
    }

    /// All points in index order.
    pub fn points(&self) -> Vec<Complex64> {
        (0..self.size()).map(|i| self.point(i)).collect()
    }

    /// Index of the nearest point.
    ///
    /// Decisions are per axis. A coordinate exactly on a boundary takes the
    /// level whose written bit pattern is lowest: 0 slices to the positive
    /// QPSK half, and the 16-QAM boundaries -2/sqrt(10), 0, +2/sqrt(10)
    /// slice to -3, -1, +3.
    pub fn slice(&self, z: Complex64) -> usize {
        match self {
            Constellation::Qpsk => {
                let b0 = usize::from(z.re < 0.0);
                let b1 = usize::from(z.im < 0.0);
                b0 | (b1 << 1)
            }
            Constellation::Qam16 => {
                let (b0, b1) = qam16_slice_axis(z.re);
                let (b2, b3) = qam16_slice_axis(z.im);
                b0 | (b1 << 1) | (b2 << 2) | (b3 << 3)
            }
        }
    }

    /// Maps a bit sequence to symbols, one group per symbol.
    pub fn map_bits(&self, bits: &[u8]) -> Result<Vec<Complex64>, ModemError> {
        let bps = self.bits_per_symbol();
        if bits.len() % bps != 0 {
            return Err(ModemError::PartialSymbol {
                len: bits.len(),
                bits_per_symbol: bps,
            });
        }
        for (index, &value) in bits.iter().enumerate() {
            if value > 1 {
                return Err(ModemError::InvalidBit { index, value });
            }
        }
        Ok(bits
            .chunks(bps)
            .map(|group| {
                let idx = group
                    .iter()
                    .enumerate()
                    .fold(0usize, |acc, (i, &b)| acc | (usize::from(b) << i));
                self.point(idx)
            })
            .collect())
    }

    /// Hard-decision demapping back to bits.
    pub fn demap(&self, symbols: &[Complex64]) -> Vec<u8> {
        let bps = self.bits_per_symbol();
        let mut bits = Vec::with_capacity(symbols.len() * bps);
        for &z in symbols {
            let idx = self.slice(z);
            for i in 0..bps {
                bits.push(((idx >> i) & 1) as u8);
            }
        }
        bits
    }
}

impl fmt::Display for Constellation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constellation::Qpsk => write!(f, "qpsk"),
            Constellation::Qam16 => write!(f, "qam16"),
        }
    }
}

impl FromStr for Constellation {
    type Err = ParseConstellationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("qpsk") {
            Ok(Constellation::Qpsk)
        } else if s.eq_ignore_ascii_case("qam16") {
            Ok(Constellation::Qam16)
        } else {
            Err(ParseConstellationError(s.to_string()))
        }
    }
}

/// 16-QAM axis level for a written bit pair (first, second).
fn qam16_level(first: usize, second: usize) -> f64 {
    let level = match (first, second) {
        (0, 0) => -3.0,
        (0, 1) => -1.0,
        (1, 1) => 1.0,
        (1, 0) => 3.0,
        _ => unreachable!("bit arguments are masked to one bit"),
    };
    level / 10f64.sqrt()
}

/// Written bit pair (first, second) for one received coordinate.
fn qam16_slice_axis(u: f64) -> (usize, usize) {
    let boundary = 2.0 / 10f64.sqrt();
    if u <= -boundary {
        (0, 0)
    } else if u <= 0.0 {
        (0, 1)
    } else if u < boundary {
        (1, 1)
    } else {
        (1, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn qpsk_map_examples() {
        let s = Constellation::Qpsk.map_bits(&[0, 0, 1, 0, 0, 1, 1, 1]).unwrap();
        let k = QPSK_SCALE;
        assert_eq!(s[0], Complex64::new(k, k));
        assert_eq!(s[1], Complex64::new(-k, k));
        assert_eq!(s[2], Complex64::new(k, -k));
        assert_eq!(s[3], Complex64::new(-k, -k));
    }

    #[test]
    fn qam16_map_examples() {
        let k = 10f64.sqrt().recip();
        let s = Constellation::Qam16.map_bits(&[0, 0, 0, 0, 1, 0, 1, 1]).unwrap();
        assert_abs_diff_eq!(s[0].re, -3.0 * k, epsilon = 1e-15);
        assert_abs_diff_eq!(s[0].im, -3.0 * k, epsilon = 1e-15);
        assert_abs_diff_eq!(s[1].re, 3.0 * k, epsilon = 1e-15);
        assert_abs_diff_eq!(s[1].im, 1.0 * k, epsilon = 1e-15);
    }

    #[test]
    fn round_trip_is_exact_for_every_index() {
        for c in [Constellation::Qpsk, Constellation::Qam16] {
            for idx in 0..c.size() {
                assert_eq!(c.slice(c.point(idx)), idx, "{c} index {idx}");
            }
        }
    }

    #[test]
    fn unit_average_energy() {
        for c in [Constellation::Qpsk, Constellation::Qam16] {
            let mean: f64 =
                c.points().iter().map(|z| z.norm_sqr()).sum::<f64>() / c.size() as f64;
            assert_abs_diff_eq!(mean, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_mean() {
        for c in [Constellation::Qpsk, Constellation::Qam16] {
            let sum: Complex64 = c.points().iter().sum();
            assert!(sum.norm() <= 1e-15, "{c} mean offset {}", sum.norm());
        }
    }

    #[test]
    fn gray_neighbors_differ_in_one_bit() {
        for c in [Constellation::Qpsk, Constellation::Qam16] {
            let pts = c.points();
            let min_dist = (0..pts.len())
                .flat_map(|i| (0..pts.len()).map(move |j| (i, j)))
                .filter(|(i, j)| i != j)
                .map(|(i, j)| (pts[i] - pts[j]).norm())
                .fold(f64::INFINITY, f64::min);
            for i in 0..pts.len() {
                for j in 0..pts.len() {
                    if i < j && (pts[i] - pts[j]).norm() <= min_dist * 1.0001 {
                        assert_eq!((i ^ j).count_ones(), 1, "{c} neighbors {i} {j}");
                    }
                }
            }
        }
    }

    #[test]
    fn boundary_ties_take_lowest_written_pattern() {
        let q = Constellation::Qpsk;
        assert_eq!(q.slice(Complex64::ZERO), 0);
        let c = Constellation::Qam16;
        let b = 2.0 / 10f64.sqrt();
        assert_eq!(qam16_slice_axis(-b), (0, 0));
        assert_eq!(qam16_slice_axis(0.0), (0, 1));
        assert_eq!(qam16_slice_axis(b), (1, 0));
        assert_eq!(c.demap(&[Complex64::ZERO]), vec![0, 1, 0, 1]);
    }

    #[test]
    fn map_bits_rejects_bad_input() {
        assert_eq!(
            Constellation::Qpsk.map_bits(&[0, 1, 1]).unwrap_err(),
            ModemError::PartialSymbol {
                len: 3,
                bits_per_symbol: 2
            }
        );
        assert_eq!(
            Constellation::Qam16.map_bits(&[0, 2, 0, 0]).unwrap_err(),
            ModemError::InvalidBit { index: 1, value: 2 }
        );
    }

    #[test]
    fn demap_inverts_map() {
        let bits: Vec<u8> = (0..64).map(|i| ((i * 7 + 3) % 5 % 2) as u8).collect();
        for c in [Constellation::Qpsk, Constellation::Qam16] {
            let syms = c.map_bits(&bits).unwrap();
            assert_eq!(c.demap(&syms), bits);
        }
    }

    #[test]
    fn parse_and_display_round_trip() {
        assert_eq!("qpsk".parse::<Constellation>().unwrap(), Constellation::Qpsk);
        assert_eq!("QAM16".parse::<Constellation>().unwrap(), Constellation::Qam16);
        assert!("8psk".parse::<Constellation>().is_err());
        assert_eq!(Constellation::Qam16.to_string(), "qam16");
    }
}
