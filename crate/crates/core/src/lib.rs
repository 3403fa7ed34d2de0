//! Numerical core of a configurable multiband speech-enhancement toolkit.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO. It covers:
//!
//! - [`pqmf`]: pseudo-QMF prototype design, analysis and synthesis
//! - [`degrade`]: simulated in-ear degradations (fixed biquad, random FIR)
//! - [`sysid`]: Welch transfer-function and coherence estimation
//! - [`nn`]: the configurable generator / discriminator forward passes
//! - [`loss`]: hinge, feature-matching and signal metrics
//!
//! File formats, the CLI and benchmarking live in the `eben` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod audio;
pub mod degrade;
pub mod dsp;
pub mod loss;
pub mod nn;
pub mod pqmf;
pub mod rng;
pub mod sysid;

pub use audio::{AudioBuffer, AudioError, SAMPLE_RATE_HZ};
pub use pqmf::{BandSelection, PqmfBank, PqmfError, PrototypeFilter, SubbandTensor};
pub use degrade::{DegradationReport, DegradeError, Pipeline, RandomResponseSpec, ResponseBounds};
pub use loss::{Db, LossBreakdown, LossError};
pub use nn::{NetworkConfig, NnError, WeightStore};
pub use rng::{derive_seed, SeededRng};
pub use sysid::{CoherenceCurve, SysidError, TransferFunctionEstimate, VadMask, WelchConfig};
