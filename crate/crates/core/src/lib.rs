//! Optical channel impulse response (OCIR) fingerprint localization.
//!
//! The crate ray-traces line-of-sight and one-bounce reflected paths in an
//! empty room, turns each impulse response into the noisy sampled output
//! of a pulsed infrared link, and regresses the transmitter position from
//! the concatenated receiver samples with a single-hidden-layer network.
//! Linear RSS trilateration and a DC-RSS network serve as baselines.

pub mod ann;
pub mod baselines;
pub mod channel;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod signal;

pub use error::{Error, Result};
