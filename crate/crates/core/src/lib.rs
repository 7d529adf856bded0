//! Self-testing quantum random number generation from an energy bound.
//!
//! A prepare-and-measure device encodes a bit `x` in a weak coherent state,
//! interferes it with a local oscillator and records a threshold-detector
//! click `b`. Assuming only a bound on the mean photon number of the
//! prepared states, correlations between `x` and `b` that exceed the
//! classical bound certify that `b` is not deterministic. This crate
//! simulates the optics, checks the classical boundary, certifies
//! finite-size smooth min-entropy per block through a linear witness and
//! extracts the certified bits with Toeplitz hashing.

pub mod bits;
pub mod certify;
pub mod classical;
pub mod error;
pub mod extract;
pub mod gf2;
pub mod lp;
pub mod model;
pub mod optics;
pub mod pipeline;
pub mod roundlog;
pub mod sim;

pub use bits::BitString;
pub use error::{Error, Result};
pub use model::{
    counts_to_frequencies, CertifiedBlock, ConditionalTable, CorrelationCounts, DeviceParams,
    DeviceParamsSpec, EnergyBounds, Frequencies, JointFrequencies, RoundRecord, WitnessCertificate,
};
pub use sim::{sample_block, DriftKind, DriftModel};
