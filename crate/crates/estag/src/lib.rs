//! Equivariant spatio-temporal attentive graph networks for trajectory
//! forecasting on non-Markovian physical systems.
//!
//! The crate is organized around five parts:
//!
//! - [`autodiff`]: a dense-tensor reverse-mode tape with Adam and a
//!   finite-difference gradient checker;
//! - [`fourier`]: equivariant DFT features over input trajectories
//!   (spectra, cross-correlation edge features, amplitudes);
//! - [`model`]: the alternating spatial/temporal equivariant network,
//!   its ablations, multi-channel variant, and checkpoint format;
//! - [`data`]: a hidden-variable spring simulator, dataset windowing,
//!   neighbor graphs, and binary dataset I/O;
//! - [`harness`]: training, evaluation, baselines, rollout forecasting,
//!   and the equivariance checker behind the CLI.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod fourier;
pub mod harness;
pub mod model;
pub mod params;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use params::{GradMap, ParamStore};
pub use tensor::Tensor;
