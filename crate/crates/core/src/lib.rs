//! Simulator and trainer for secure uplink communication through stacked
//! programmable metasurfaces.
//!
//! The crate splits into a physics half and a learning half:
//!
//! - [`em`] builds the multilayer metasurface geometry and the wave-domain
//!   beamforming cascade (per-layer phase matrices, inter-layer diffraction).
//! - [`channel`] samples spatially correlated Rician user channels and the
//!   direct user-to-eavesdropper channels.
//! - [`mobility`] moves users with a biased random walk inside the service area.
//! - [`metrics`] computes uplink SINRs under residual hardware impairments,
//!   per-user rates and secrecy rates.
//! - [`env`] wraps everything into an episodic decision process with a
//!   composite shaped reward.
//! - [`neural`] is a small self-contained neural library (dense, LSTM,
//!   bidirectional LSTM, multi-head self-attention, Gaussian policy and value
//!   heads) with hand-written reverse-mode gradients.
//! - [`ppo`] implements the clipped-surrogate trainer with off-policy data
//!   reuse, KL-adaptive batch mixing and policy-weighted critic targets.
//! - [`harness`] holds the experiment configuration, static baseline
//!   strategies, parameter sweeps, ablations and the command-line interface.

pub mod channel;
pub mod em;
pub mod env;
pub mod harness;
pub mod metrics;
pub mod mobility;
pub mod neural;
pub mod ppo;
pub mod rng;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("index out of range: {what} = {got}, valid range {min}..={max}")]
    IndexOutOfRange {
        what: &'static str,
        got: usize,
        min: usize,
        max: usize,
    },
    #[error("coincident points: distance must be positive")]
    CoincidentPoints,
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
