//! Latent-class model scoring: EM fitting of naive-Bayes models with a hidden
//! root, exact and approximate marginal likelihoods, and model-selection
//! sweeps over the hidden arity.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod cli;
pub mod em;
pub mod error;
pub mod experiment;
pub mod model;
pub mod model_file;
pub mod numerics;
pub mod scoring;
pub mod synth;

pub use error::{Error, Result};
