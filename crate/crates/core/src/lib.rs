//! Multi-user wireless energy transfer from RSSI feedback.
//!
//! The crate covers the whole transmitter-side pipeline:
//!
//! 1. [`codebook`] builds the pairwise-activation training beams.
//! 2. [`channel`] generates random MISO channels and evaluates the energy law
//!    `R = ξ h† C h`. Training feedback follows the per-beam sinusoid model in
//!    [`codebook::ScheduledBeam::noiseless_rssi`] instead.
//! 3. [`estimation`] turns RSSI feedback into per-receiver channel estimates
//!    (relative phases by a closed-form sinusoid fit, magnitudes from the DC
//!    level and the single-antenna beam).
//! 4. [`clustering`] groups receivers by estimated phase with Lloyd's
//!    algorithm and picks the tightest cluster.
//! 5. [`beamformer`] builds the robust max-min problem over that cluster,
//!    solved by the dense barrier solver in [`sdp`], and also provides the
//!    MRT / EGT / random / best-channel baselines.
//!
//! Everything is `no_std` + `alloc`. Randomness is always injected through a
//! caller-owned [`rand::Rng`], so results are reproducible under a fixed seed.
//!
//! # Beam convention
//!
//! A beam is a weight vector `w` whose received energy at channel `h` is
//! `ξ |Σ_k w_k h_k|²`. The matching transmit covariance is `C = w̄ wᵀ`
//! ([`channel::CovarianceMatrix::from_beam`]), so that `ξ h† C h` gives the
//! same number.

#![no_std]
#![forbid(unsafe_code)]
// `!(x >= 0.0)` is used on purpose so NaN lands in the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod beamformer;
pub mod channel;
pub mod clustering;
pub mod codebook;
mod error;
pub mod estimation;
pub mod linalg;
pub mod sdp;

pub use error::{Error, Result};
pub use num_complex::Complex64;
