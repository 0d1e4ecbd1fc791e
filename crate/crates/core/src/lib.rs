//! Inference on softmax-unit Boltzmann machines and the discrete-time
//! Linear-Nonlinear-Poisson (LNP) networks that carry it out.
//!
//! The crate provides three inference engines over one channel-level
//! representation:
//!
//! - Gibbs sampling,
//! - mean-field variational inference,
//! - semi-stochastic inference (SSI), which samples from the mean-field
//!   proposal and folds each sample back into the variational parameters
//!   through a decaying kernel.
//!
//! Around the engines sit the network rewrites that turn a Boltzmann machine
//! into a bias-free, event-level, sign-segregated spiking network
//! ([`transforms`]), the spiking simulator itself ([`lnp_sim`]), deterministic
//! and stochastic stability analysis of the trace dynamics ([`stability`]),
//! and trajectory statistics ([`trajectory_stats`]).
//!
//! Every stochastic path draws from [`rng::CounterRng`], whose values are a
//! pure function of `(seed, step, slot)`. Runs are reproducible bit for bit
//! and independent of worker count.

pub mod error;
pub mod inference;
pub mod io;
pub mod kernels;
pub mod lnp_sim;
pub mod math;
pub mod model;
pub mod reconstruct;
pub mod rng;
pub mod stability;
pub mod trajectory_stats;
pub mod transforms;

pub use error::{Diagnostic, Error, Result};
pub use inference::{ChannelNet, Engine, RunConfig, Trajectory};
pub use kernels::{Kernel, KernelSpec, SpikeHistory};
pub use model::{BoltzmannMachine, Observation, PairwiseParams, State};
pub use transforms::{LnpNetwork, TransformRecord};

/// Version string embedded in every output file.
pub const TOOL_VERSION: &str = concat!("lnpbm ", env!("CARGO_PKG_VERSION"));
