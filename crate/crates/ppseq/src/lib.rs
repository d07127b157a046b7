//! PP-Seq: a Neyman-Scott point process model for detecting recurring
//! sequences in marked event streams (e.g. multineuronal spike trains).
//!
//! The crate provides:
//!
//! * [`model`] — domain types, warp grids, intensity and exact log-likelihood;
//! * [`generative`] — forward simulation of the full generative process;
//! * [`gibbs`] — the collapsed Gibbs sampler over spike partitions, with
//!   split-merge Metropolis-Hastings moves;
//! * [`driver`] — chain orchestration: annealing, speckled masking and
//!   imputation, thinning, posterior summaries;
//! * [`parallel`] — the time-sharded parallel sampler;
//! * [`eval`] — ROC/AUC with shift alignment and randomized hyperparameter
//!   sweeps;
//! * [`io`] — CSV/JSON file formats, configuration and checkpoints.
//!
//! All randomness flows through explicitly injected RNGs; fixed seeds give
//! byte-identical results.

pub mod dists;
pub mod driver;
pub mod error;
pub mod eval;
pub mod generative;
pub mod gibbs;
pub mod io;
pub mod math;
pub mod model;
pub mod parallel;

pub use error::{Error, Result};
pub use model::{Dataset, GlobalParams, Hyperparams, LatentEvent, Spike, WarpGrid};
