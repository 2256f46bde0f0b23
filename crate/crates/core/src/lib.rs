//! Robust Bayesian item-response ideal-point estimation for roll-call data.
//!
//! A probit spatial voting model with per-vote shift parameters fitted by EM.
//! The ℓ0 penalty on the shifts lets a handful of strategic (protest) votes be
//! absorbed without dragging the voter's ideal point toward the centre.

pub mod analysis;
pub mod cli;
pub mod em;
pub mod error;
pub mod identification;
pub mod io;
pub mod model;
pub mod normal;
pub mod preprocess;
pub mod simulate;

pub use error::{Error, Result};
