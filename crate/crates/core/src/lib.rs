//! Finite-space laboratory for sequential Bayesian persuasion with a hidden
//! receiver confounder.
//!
//! - [`bp`]: one-shot persuasion (posterior, best response, policy value).
//! - [`spp`]: the sequential process, simulation and logged datasets.
//! - [`pomdp`]: the lifted POMDP and strategy correspondence.
//! - [`oracle`]: exact enumeration of trajectory laws and values.
//! - [`ope`]: the proximal off-policy estimator and its diagnostics.
//! - [`harness`]: experiment configs, reports and CLI commands.

pub mod bp;
pub mod ope;
pub mod oracle;
pub mod error;
pub mod harness;
pub mod presets;
pub mod prob;
pub mod pomdp;
pub mod spp;

pub use error::{Error, Result};
