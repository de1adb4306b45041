//! MIMO link-level simulation library.
//!
//! Builds BER-versus-SNR curves for spatial-multiplexing transceivers over
//! i.i.d. Rayleigh flat-fading channels. Three schemes are implemented:
//!
//! * `gmd-sic` — geometric mean decomposition precoding with back-substitution
//!   successive interference cancellation, giving every spatial layer the same
//!   sub-channel gain,
//! * `svd-eigenmode` — equal-power transmission over the SVD eigenmodes with
//!   per-mode slicing,
//! * `zf-vblast` — unprecoded transmission with classic zero-forcing ordered
//!   nulling and cancellation.
//!
//! The Monte Carlo engine is deterministic: a campaign is a pure function of
//! its [`ScenarioConfig`], including the master seed, regardless of how many
//! threads run it.

pub mod channel;
pub mod engine;
pub mod gmd;
pub mod linalg;
pub mod modem;
pub mod transceiver;

pub use channel::{ChannelRealization, NoiseSpec, StreamRole};
pub use engine::{BerCurve, BerPoint, ScenarioConfig};
pub use gmd::GmdResult;
pub use linalg::{ComplexMatrix, SvdResult};
pub use modem::Constellation;
pub use transceiver::{DetectionResult, SchemeKind, TxFrame};
