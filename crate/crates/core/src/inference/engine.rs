use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::net::{ChannelNet, UnitKind};
use super::trajectory::Trajectory;
use crate::error::{Error, Result};
use crate::kernels::{convolve_trace, Kernel, KernelFamily, KernelSpec, SpikeHistory};
use crate::rng::{bernoulli, CounterRng, Domain};

/// Trajectory storage limit, in channel-steps.
pub const MAX_RECORDED_ENTRIES: usize = 20_000_000;

/// Networks at least this wide compute proposals on the rayon pool.
const PARALLEL_PROPOSAL_THRESHOLD: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Gibbs,
    Variational,
    Ssi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    SequentialCyclic,
    SequentialRandomScan,
    ParallelSynchronized,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Channels drawn uniform in (0, 1), then normalized within paired units.
    #[default]
    UniformRandom,
    ConstantHalf,
    UserVector(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub schedule: Schedule,
    pub steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub init: Init,
    /// SSI only: fold the expectation of each draw instead of the draw.
    #[serde(default)]
    pub deterministic: bool,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, schedule: Schedule, steps: usize, seed: u64) -> Self {
        Self {
            algorithm,
            schedule,
            steps,
            seed,
            kernel: KernelSpec::default(),
            init: Init::default(),
            deterministic: false,
        }
    }

    pub fn with_kernel(mut self, kernel: KernelSpec) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn with_deterministic(mut self, on: bool) -> Self {
        self.deterministic = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::config("steps must be at least 1"));
        }
        if self.deterministic && self.algorithm != Algorithm::Ssi {
            return Err(Error::config("deterministic mode applies to ssi only"));
        }
        if self.algorithm == Algorithm::Ssi && self.kernel.family != KernelFamily::ExponentialNormalized {
            return Err(Error::config("ssi needs a normalized kernel"));
        }
        self.kernel.build()?;
        Ok(())
    }
}

/// Per-step engine state. `x` holds the draws of the last step (NaN for
/// channels not drawn); `phi` the latest proposal of each channel (NaN
/// before the first touch).
#[derive(Clone, Debug, PartialEq)]
pub struct InferenceState {
    pub t: u64,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    pub x: Vec<f64>,
    pub history: Vec<SpikeHistory>,
}

impl InferenceState {
    fn new(channels: usize) -> Self {
        Self {
            t: 0,
            theta: vec![0.0; channels],
            phi: vec![f64::NAN; channels],
            x: vec![f64::NAN; channels],
            history: Vec::new(),
        }
    }
}

/// `(φ_A, φ_B)` for unit `i` of the original model.
pub fn proposal(params: &crate::model::PairwiseParams, theta: &[f64], i: usize) -> (f64, f64) {
    use crate::model::{channel, State};
    let one = |u: State| {
        let mut acc = 0.0;
        for &j in params.blanket(i) {
            for v in State::ALL {
                acc += params.weight(i, u, j, v) * theta[channel(j, v)];
            }
        }
        crate::math::logistic(acc - params.bias(i, u))
    };
    (one(State::A), one(State::B))
}

/// Fills `state.phi` for every channel of `units` from the current θ.
fn compute_proposals(net: &ChannelNet, state: &mut InferenceState, units: &[usize]) {
    let chans: Vec<usize> = units
        .iter()
        .flat_map(|&k| net.units()[k].channels.iter().copied())
        .collect();
    if chans.len() >= PARALLEL_PROPOSAL_THRESHOLD {
        let theta = &state.theta;
        let vals: Vec<f64> = chans.par_iter().map(|&c| net.proposal(c, theta)).collect();
        for (c, v) in chans.into_iter().zip(vals) {
            state.phi[c] = v;
        }
    } else {
        for c in chans {
            state.phi[c] = net.proposal(c, &state.theta);
        }
    }
}

/// Probability of the first channel of a paired unit after renormalizing
/// the pair.
#[inline]
fn paired_probability(phi_a: f64, phi_b: f64) -> f64 {
    let total = phi_a + phi_b;
    if total > 0.0 && total.is_finite() {
        phi_a / total
    } else {
        0.5
    }
}

/// Draws the unit's channels into `state.x`; returns nothing, `x` holds
/// the indicators.
fn sample_unit(net: &ChannelNet, state: &mut InferenceState, unit: usize, draws: &mut crate::rng::DrawStream) {
    let u = &net.units()[unit];
    match u.kind {
        UnitKind::Paired => {
            let (a, b) = (u.channels[0], u.channels[1]);
            let p = paired_probability(state.phi[a], state.phi[b]);
            let r = draws.uniform(net.draw_slot(unit, a));
            let hit = bernoulli(r, p);
            state.x[a] = if hit { 1.0 } else { 0.0 };
            state.x[b] = if hit { 0.0 } else { 1.0 };
        }
        UnitKind::Independent => {
            for &c in &u.channels {
                let r = draws.uniform(net.draw_slot(unit, c));
                state.x[c] = if bernoulli(r, state.phi[c]) { 1.0 } else { 0.0 };
            }
        }
    }
}

/// Expected indicators of a unit under its current proposal.
fn expected_unit(net: &ChannelNet, state: &mut InferenceState, unit: usize) {
    let u = &net.units()[unit];
    match u.kind {
        UnitKind::Paired => {
            let (a, b) = (u.channels[0], u.channels[1]);
            let p = paired_probability(state.phi[a], state.phi[b]);
            state.x[a] = p;
            state.x[b] = 1.0 - p;
        }
        UnitKind::Independent => {
            for &c in &u.channels {
                state.x[c] = state.phi[c];
            }
        }
    }
}

fn begin_step(net: &ChannelNet, state: &mut InferenceState, record_clamped: bool) {
    state.t += 1;
    for (c, x) in state.x.iter_mut().enumerate() {
        *x = match net.clamp()[c] {
            Some(v) if record_clamped => v,
            _ => f64::NAN,
        };
    }
}

/// One Gibbs step over `units` (one unit for sequential schedules, every
/// hidden unit for the synchronized parallel schedule). θ holds the 0/1
/// indicators of the current assignment.
pub fn gibbs_step(net: &ChannelNet, state: &mut InferenceState, units: &[usize], rng: &CounterRng) {
    begin_step(net, state, true);
    compute_proposals(net, state, units);
    let mut draws = rng.stream(Domain::Step, state.t);
    for &k in units {
        sample_unit(net, state, k, &mut draws);
        for &c in &net.units()[k].channels {
            state.theta[c] = state.x[c];
        }
    }
}

/// One mean-field step: `θ_c ← φ_c` on the touched channels.
pub fn variational_step(net: &ChannelNet, state: &mut InferenceState, units: &[usize]) {
    begin_step(net, state, false);
    compute_proposals(net, state, units);
    for &k in units {
        for &c in &net.units()[k].channels {
            state.theta[c] = state.phi[c];
        }
    }
}

/// One semi-stochastic step: propose from θ, draw, push the draw into the
/// channel history, and set θ to the kernel-weighted history.
pub fn ssi_step(
    net: &ChannelNet,
    state: &mut InferenceState,
    units: &[usize],
    kernel: &Kernel,
    rng: &CounterRng,
    deterministic: bool,
) {
    begin_step(net, state, true);
    compute_proposals(net, state, units);
    let mut draws = rng.stream(Domain::Step, state.t);
    for &k in units {
        if deterministic {
            expected_unit(net, state, k);
        } else {
            sample_unit(net, state, k, &mut draws);
        }
        for &c in &net.units()[k].channels {
            state.history[c].push(state.x[c]);
            state.theta[c] = convolve_trace(&state.history[c], kernel);
        }
    }
}

/// Initial parameters before any sampling.
fn initial_theta(net: &ChannelNet, init: &Init, rng: &CounterRng) -> Result<Vec<f64>> {
    let m = net.channels();
    let mut theta = match init {
        Init::ConstantHalf => vec![0.5; m],
        Init::UserVector(v) => {
            if v.len() != m {
                return Err(Error::config(format!("init vector has {} entries, net has {m} channels", v.len())));
            }
            if let Some(bad) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(Error::config(format!("init value {bad} outside [0,1]")));
            }
            v.clone()
        }
        Init::UniformRandom => {
            let mut s = rng.stream(Domain::InitTheta, 0);
            let mut theta: Vec<f64> = (0..m).map(|c| s.open01(c as u64)).collect();
            for u in net.units() {
                if u.kind == UnitKind::Paired {
                    let total: f64 = u.channels.iter().map(|&c| theta[c]).sum();
                    for &c in &u.channels {
                        theta[c] /= total;
                    }
                }
            }
            theta
        }
    };
    for (c, v) in net.clamp().iter().enumerate() {
        if let Some(v) = v {
            theta[c] = *v;
        }
    }
    Ok(theta)
}

/// Steps one run forward; owns its state.
pub struct Engine<'a> {
    net: &'a ChannelNet,
    config: RunConfig,
    kernel: Kernel,
    rng: CounterRng,
    hidden: Vec<usize>,
    initial_theta: Vec<f64>,
    state: InferenceState,
}

impl<'a> Engine<'a> {
    pub fn new(net: &'a ChannelNet, config: RunConfig) -> Result<Self> {
        config.validate()?;
        let kernel = config.kernel.build()?;
        let rng = CounterRng::new(config.seed);
        let hidden = net.hidden_units();
        let theta0 = initial_theta(net, &config.init, &rng)?;
        let mut state = InferenceState::new(net.channels());
        match config.algorithm {
            Algorithm::Variational => state.theta = theta0.clone(),
            Algorithm::Gibbs | Algorithm::Ssi => {
                // The initial assignment is drawn from θ⁽⁰⁾ (or replaced by
                // its expectation in deterministic mode) and seeds the history.
                state.theta = theta0.clone();
                for &k in &hidden {
                    if config.deterministic {
                        expected_from(net, &mut state, k, &theta0);
                    } else {
                        let mut draws = rng.stream(Domain::InitSample, 0);
                        state.phi.clone_from(&theta0);
                        sample_unit(net, &mut state, k, &mut draws);
                    }
                }
                for (c, v) in net.clamp().iter().enumerate() {
                    if let Some(v) = v {
                        state.x[c] = *v;
                    }
                }
                if config.algorithm == Algorithm::Ssi {
                    state.history = (0..net.channels()).map(|_| SpikeHistory::new(kernel.horizon())).collect();
                    for c in 0..net.channels() {
                        match net.clamp()[c] {
                            Some(v) => {
                                state.history[c].fill(v);
                                state.theta[c] = v;
                            }
                            None => {
                                state.history[c].push(state.x[c]);
                                state.theta[c] = convolve_trace(&state.history[c], &kernel);
                            }
                        }
                    }
                } else {
                    state.theta.clone_from(&state.x);
                }
                state.phi.fill(f64::NAN);
                state.x.fill(f64::NAN);
            }
        }
        Ok(Self {
            net,
            initial_theta: state.theta.clone(),
            config,
            kernel,
            rng,
            hidden,
            state,
        })
    }

    pub fn state(&self) -> &InferenceState {
        &self.state
    }

    pub fn net(&self) -> &ChannelNet {
        self.net
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// θ after initialization, before the first step.
    pub fn initial_theta(&self) -> &[f64] {
        &self.initial_theta
    }

    /// Units the next step will touch.
    fn scheduled_units(&self) -> Vec<usize> {
        if self.hidden.is_empty() {
            return Vec::new();
        }
        let next = self.state.t + 1;
        match self.config.schedule {
            Schedule::ParallelSynchronized => self.hidden.clone(),
            Schedule::SequentialCyclic => {
                vec![self.hidden[((next - 1) % self.hidden.len() as u64) as usize]]
            }
            Schedule::SequentialRandomScan => {
                let r = self.rng.uniform(Domain::Step, next, 0);
                let k = ((r * self.hidden.len() as f64) as usize).min(self.hidden.len() - 1);
                vec![self.hidden[k]]
            }
        }
    }

    pub fn step(&mut self) {
        let units = self.scheduled_units();
        match self.config.algorithm {
            Algorithm::Gibbs => gibbs_step(self.net, &mut self.state, &units, &self.rng),
            Algorithm::Variational => variational_step(self.net, &mut self.state, &units),
            Algorithm::Ssi => ssi_step(
                self.net,
                &mut self.state,
                &units,
                &self.kernel,
                &self.rng,
                self.config.deterministic,
            ),
        }
    }
}

fn expected_from(net: &ChannelNet, state: &mut InferenceState, unit: usize, theta0: &[f64]) {
    state.phi.copy_from_slice(theta0);
    expected_unit(net, state, unit);
}

/// Runs `config.steps` steps and records θ, φ and x after each one.
pub fn run(net: &ChannelNet, config: &RunConfig) -> Result<Trajectory> {
    let m = net.channels();
    let entries = config.steps.saturating_mul(m);
    if entries > MAX_RECORDED_ENTRIES {
        return Err(Error::Capacity {
            what: "recorded trajectory entries",
            actual: entries,
            limit: MAX_RECORDED_ENTRIES,
        });
    }
    let mut engine = Engine::new(net, config.clone())?;
    let mut traj = Trajectory::empty(net, engine.initial_theta().to_vec(), config.steps);
    for _ in 0..config.steps {
        engine.step();
        let s = engine.state();
        traj.push_step(&s.theta, &s.phi, &s.x);
    }
    Ok(traj)
}
