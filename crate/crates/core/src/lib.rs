//! Blind channel estimation for PSK-modulated OFDM.
//!
//! The receiver runs a per-subcarrier EM estimator with a time-domain
//! truncation step, optionally couples it to a BCJR decoder in a turbo loop,
//! and can resolve the `2π/C` phase ambiguity of the blind estimate by
//! scoring circularly shifted symbol candidates with the decoder's model
//! evidence.
//!
//! Module map:
//!
//! - [`numerics`]: unitary DFT, seeded RNG streams, complex Gaussian noise.
//! - [`fec`]: rate-1/2 convolutional code and log-domain BCJR decoder.
//! - [`bits`]: interleaver and PSK soft/hard (de)mapping.
//! - [`ofdm`]: frame configuration, grids, cyclic-prefix (de)modulation.
//! - [`channel`]: FIR channel with global phase and AWGN.
//! - [`em`]: hard-decision init, E-step, M-step, truncation refinement.
//! - [`phase_detect`]: evidence-based phase ambiguity detection.
//! - [`receiver`]: conventional / code-aided / phase-aware schedules.
//! - [`harness`]: Monte Carlo driver, metrics and file outputs.

pub mod bits;
pub mod channel;
pub mod em;
mod error;
pub mod fec;
pub mod harness;
pub mod numerics;
pub mod ofdm;
pub mod phase_detect;
pub mod receiver;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Probability floor applied wherever probabilities are formed.
pub const PROB_EPS: f64 = 1e-12;
