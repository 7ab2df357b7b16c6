//! K-sample equivalence testing for multi-dimensional categorical data.
//!
//! Checks whether K datasets (for example the arms of an A/B/n traffic
//! split) come from the same distribution. Three test methods are provided —
//! the distance-components (DISCO) test, a propensity-score classification
//! test, and a randomized chi-square test — together with permutation-based
//! multiplicity control, a baseline per-column F-test, and the synthetic
//! data generators used by the power-study engine.

pub mod dataset;
pub mod disco;
pub mod error;
pub mod multiplicity;
pub mod propensity;
pub mod randchi;
pub mod simgen;
pub mod statfun;

pub use error::{Error, Result};
