//! Adjustable-privacy tabular data obfuscation.
//!
//! An autoencoder whose bottleneck is split into a small classifier head
//! (carrying one designated non-private attribute) and a "rest" head
//! (everything else). After training, the data provider releases decoded
//! records whose classifier head is clamped to the true class and whose
//! rest head carries tunable Gaussian noise, trading adversary accuracy
//! on a private attribute against downstream utility on the non-private
//! one. The crate covers the networks and training, the post-hoc privacy
//! functions, the adversary/utility evaluation protocols, and the
//! tradeoff-curve sweeps with convex-hull AUC scoring.

pub mod data;
pub mod error;
pub mod eval;
pub mod nn;
pub mod obfuscator;
pub mod privatize;
pub mod tradeoff;

pub use error::{Error, Result};
