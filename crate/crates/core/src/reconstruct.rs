//! Up-and-down reconstruction through a layered model: clamp the input on
//! the visible units, infer, freeze the top layer at its rounded
//! activations, infer back down, and read off the visible units.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::{observation_clamp, run, Algorithm, ChannelNet, Field, Init, RunConfig, Schedule};
use crate::kernels::KernelSpec;
use crate::math::mean;
use crate::model::{channel, BoltzmannMachine, Observation, State};
use crate::rng::{CounterRng, Domain};

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructConfig {
    pub algorithm: Algorithm,
    pub schedule: Schedule,
    pub up_steps: usize,
    pub down_steps: usize,
    pub seed: u64,
    pub kernel: KernelSpec,
    /// Sampling engines report the mean over this many final steps.
    pub terminal_window: usize,
}

impl ReconstructConfig {
    pub fn new(algorithm: Algorithm, up_steps: usize, down_steps: usize, seed: u64) -> Self {
        Self {
            algorithm,
            schedule: Schedule::ParallelSynchronized,
            up_steps,
            down_steps,
            seed,
            kernel: KernelSpec::default(),
            terminal_window: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Reconstruction {
    pub visible: Vec<usize>,
    pub top: Vec<usize>,
    pub top_activation: Vec<f64>,
    pub top_bits: Vec<u8>,
    pub visible_activation: Vec<f64>,
    pub visible_bits: Vec<u8>,
}

fn bit_state(b: u8) -> State {
    if b >= 1 {
        State::B
    } else {
        State::A
    }
}

/// Activation `θ_iB` per unit: the final value for variational runs, the
/// terminal-window mean for sampling runs.
fn activations(
    net: &ChannelNet,
    cfg: &RunConfig,
    units: &[usize],
    window: usize,
) -> Result<Vec<f64>> {
    let traj = run(net, cfg)?;
    Ok(units
        .iter()
        .map(|&i| {
            let c = channel(i, State::B);
            match cfg.algorithm {
                Algorithm::Variational => traj.final_theta()[c],
                _ => {
                    let s = traj.series(Field::Theta, c);
                    mean(&s[s.len() - window.min(s.len())..])
                }
            }
        })
        .collect())
}

/// Runs the reconstruction pipeline. `input` holds one bit per visible unit
/// in ascending unit order (`1 ↦ B`).
pub fn reconstruct(bm: &BoltzmannMachine, input: &[u8], cfg: &ReconstructConfig) -> Result<Reconstruction> {
    let layers = bm
        .layers()
        .ok_or_else(|| Error::config("model has no layer metadata; cannot find the top layer"))?;
    let top: Vec<usize> = layers
        .last()
        .filter(|l| !l.is_empty())
        .cloned()
        .ok_or_else(|| Error::config("top layer is empty"))?;
    let visible: Vec<usize> = bm.visible().iter().copied().collect();
    if let Some(i) = top.iter().find(|i| bm.visible().contains(i)) {
        return Err(Error::config(format!("top-layer unit {i} is visible")));
    }
    if input.len() != visible.len() {
        return Err(Error::config(format!(
            "input has {} bits, model has {} visible units",
            input.len(),
            visible.len()
        )));
    }
    if let Some(b) = input.iter().find(|&&b| b > 1) {
        return Err(Error::config(format!("input bit {b} is not 0 or 1")));
    }
    if cfg.terminal_window == 0 {
        return Err(Error::config("terminal window must be at least 1"));
    }
    let params = bm.derive_pairwise()?;
    let base = ChannelNet::from_pairwise(&params);
    let run_cfg = |steps: usize, seed: u64| {
        RunConfig::new(cfg.algorithm, cfg.schedule, steps, seed)
            .with_kernel(cfg.kernel)
            .with_init(Init::UniformRandom)
    };

    let up_obs: Observation = visible.iter().zip(input).map(|(&i, &b)| (i, bit_state(b))).collect();
    let up = base.clone().with_clamp(observation_clamp(bm.n(), &up_obs)?)?;
    let top_activation = activations(&up, &run_cfg(cfg.up_steps, cfg.seed), &top, cfg.terminal_window)?;
    let top_bits: Vec<u8> = top_activation.iter().map(|&a| u8::from(a >= 0.5)).collect();

    let down_obs: Observation = top.iter().zip(&top_bits).map(|(&i, &b)| (i, bit_state(b))).collect();
    let down = base.with_clamp(observation_clamp(bm.n(), &down_obs)?)?;
    let down_seed = CounterRng::new(cfg.seed).derive_seed(Domain::Trial, 1);
    let visible_activation = activations(&down, &run_cfg(cfg.down_steps, down_seed), &visible, cfg.terminal_window)?;
    let visible_bits = visible_activation.iter().map(|&a| u8::from(a >= 0.5)).collect();

    Ok(Reconstruction {
        visible,
        top,
        top_activation,
        top_bits,
        visible_activation,
        visible_bits,
    })
}
