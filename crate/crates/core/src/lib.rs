//! Pseudo-analog wireless video link simulator.
//!
//! The transmit side encodes raw luma video with SoftCast-style joint
//! source-channel coding (3D-DCT, variance-driven power allocation, Hadamard
//! whitening) and sends the resulting real-valued samples directly as I/Q
//! amplitudes over an 802.11a-like OFDM baseband. The receive side runs
//! Schmidl & Cox synchronization, pilot-aided channel estimation and
//! equalization, and an MMSE estimator. A conventional digital chain
//! (uniform quantizer, rate-1/3 convolutional code, 16-QAM) over the same
//! PHY serves as the cliff-effect baseline, and closed-form rate-distortion
//! bounds are available for comparison.

pub mod channel;
pub mod digital;
pub mod experiment;
pub mod link;
pub mod ofdm;
pub mod power;
pub mod source;
pub mod sync;
pub mod theory;
pub mod transform;

use thiserror::Error;

/// Errors surfaced by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("file {path} has {actual} bytes, expected a multiple of {frame_bytes} (per-frame size)")]
    TruncatedVideo {
        path: String,
        actual: u64,
        frame_bytes: u64,
    },
    #[error("frame dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("all chunk variances are zero: degenerate source")]
    DegenerateSource,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("metadata CRC check failed")]
    MetaCrc,
    #[error("metadata inconsistent with received symbols: {0}")]
    MetaInconsistent(String),
    #[error("noise estimate refused: {0} pilot observations, need at least {1}")]
    TooFewPilots(usize, usize),
    #[error("frame not detected")]
    NoFrame,
}

pub type Result<T> = std::result::Result<T, Error>;
