//! Age-optimal cache update planning for files with Markov-varying
//! popularity behind a bandwidth-limited link.
//!
//! The crate solves the per-file download problem as an occupation-measure
//! linear program, searches the download price that meets the expected
//! bandwidth budget, mixes the bracketing policies into the stationary
//! relaxed rule, and evaluates practical budget-respecting policies in a
//! seeded discrete-time simulator against square-root-law and greedy
//! baselines. A CLI drives scenario files and writes plot-ready CSV.

pub mod cli;
pub mod cmdp;
pub mod error;
pub mod lagrange;
pub mod linalg;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod policies;
pub mod sim;

pub use error::{Error, Result};
