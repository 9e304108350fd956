//! Continual-learning laboratory for railway wheel fault diagnosis.
//!
//! The crate is organised bottom-up:
//!
//! - [`sim`] synthesizes labelled wheel passages (healthy, flat, polygonized)
//!   under varying speed, load, train type and track irregularity.
//! - [`mtf`] turns a time series into a Markov transition field image.
//! - [`nn`] is a small convolutional network with analytic backpropagation.
//! - [`cl`] grows a boosting-weighted ensemble one episode per domain.
//! - [`metrics`] holds continual-learning metrics and rank statistics.
//! - [`formats`] reads and writes the binary dataset, image and checkpoint files.

pub mod cl;
pub mod error;
pub mod formats;
pub mod metrics;
pub mod mtf;
pub mod nn;
pub mod seed;
pub mod sim;

pub use error::{Error, Result};
