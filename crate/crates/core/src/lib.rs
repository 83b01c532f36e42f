//! Semi-supervised deep generative model whose label network takes the
//! latent code as a stochastic input, with optional mean-field Gaussian
//! uncertainty over the label-network weights and Gibbs-sampled prediction.
//!
//! Modules, bottom-up:
//! - [`nn`]: arrays, reverse-mode tape, MLPs, finite differences, Adam
//! - [`model`]: generative model, recognition networks, weight posterior
//! - [`objective`]: labeled/unlabeled bounds and the combined objective
//! - [`trainer`]: minibatch training for the baseline and both model modes
//! - [`predictor`]: Gibbs predictive sampling and evaluation
//! - [`data`]: two-moons generation, splitting, CSV persistence
//! - [`report`]: experiment orchestration, grids, sample dumps
//! - [`cli`]: the `ssdgm` command-line tool

pub mod cli;
pub mod data;
pub mod error;
pub mod model;
pub mod nn;
pub mod objective;
pub mod predictor;
pub mod report;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
