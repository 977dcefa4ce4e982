//! Deep-unfolded MIMO detection executed on noisy memristor crossbars.
//!
//! The crate covers the whole chain: the complex MIMO system model, a
//! behavioral memristor programming model, crossbar execution of the
//! unfolded detector, its noise-aware training, classical baselines, the
//! closed-form latency/complexity/error-bound evaluators, and a seeded Monte
//! Carlo harness that emits CSV.

pub mod analysis;
pub mod baselines;
pub mod crossbar;
pub mod detnet;
pub mod device;
pub mod error;
pub mod harness;
pub mod mimo;
pub mod rng;

pub use error::{Error, Result};
