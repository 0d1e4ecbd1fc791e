//! Gibbs, variational and semi-stochastic engines.
//!
//! All three share the proposal `φ_c = σ(Σ_d W[c,d]·θ_d + input_c)` over a
//! [`ChannelNet`]; they differ only in how θ is updated from φ:
//!
//! - Gibbs: draw, and θ becomes the indicator of the draw.
//! - Variational: θ ← φ.
//! - SSI: draw, push the draw into the channel history, and θ becomes the
//!   kernel-weighted sum of that history.

mod engine;
mod free_energy;
mod net;
mod trajectory;

pub use engine::{
    gibbs_step, proposal, run, ssi_step, variational_step, Algorithm, Engine, Init, InferenceState, RunConfig,
    Schedule, MAX_RECORDED_ENTRIES,
};
pub use free_energy::free_energy;
pub use net::{observation_clamp, ChannelLabel, ChannelNet, Slot, UnitKind, UpdateUnit};
pub(crate) use net::hex;
pub(crate) use trajectory::cell;
pub use trajectory::{moving_average, Field, Trajectory};
