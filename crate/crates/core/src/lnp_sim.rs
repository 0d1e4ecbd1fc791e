//! Discrete-time LNP network simulator.
//!
//! Each step computes rates `λ = σ(W·y + e)` from the current traces, draws
//! spikes `x_i ~ Bernoulli(ε·λ_i)`, and updates the traces either
//! recursively, `y' = (1 − aε)·y + a·x`, or by convolving the spike history
//! with the network's kernel when one is attached.
//!
//! Spike `i` at step `t` uses the same random word as channel `i` of the
//! inference engines at step `t`, so an SSI run on a split network and a
//! kernel-mode simulation of that network spike identically.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::{cell, ChannelNet, Field, Trajectory, MAX_RECORDED_ENTRIES};
use crate::kernels::{convolve_trace, recursive_trace, Kernel, SpikeHistory};
use crate::rng::{bernoulli, CounterRng, Domain};
use crate::transforms::LnpNetwork;

/// Largest interval the count-distribution DP accepts.
pub const MAX_LECAM_STEPS: usize = 100_000;

/// `σ(W·y + e)`.
pub fn rate(net: &LnpNetwork, y: &[f64]) -> Vec<f64> {
    LnpSimulator::new(net).rate(y)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LnpState {
    pub t: u64,
    /// Traces after step `t`.
    pub y: Vec<f64>,
    /// Rates used at step `t` (NaN before the first step).
    pub lambda: Vec<f64>,
    /// Spikes drawn at step `t` (NaN before the first step).
    pub x: Vec<f64>,
    history: Vec<SpikeHistory>,
}

/// Precomputed rows and trace constants of one network.
#[derive(Clone, Debug)]
pub struct LnpSimulator {
    net: ChannelNet,
    a: f64,
    eps_step: f64,
    kernel: Option<Kernel>,
}

impl LnpSimulator {
    pub fn new(net: &LnpNetwork) -> Self {
        Self {
            net: ChannelNet::from_lnp(net),
            a: net.a(),
            eps_step: net.eps_step(),
            kernel: net.kernel().map(|k| k.build().expect("kernel validated on construction")),
        }
    }

    /// Holds neurons at fixed trace values; clamped neurons never draw.
    pub fn with_clamp(mut self, clamp: Vec<Option<f64>>) -> Result<Self> {
        self.net = self.net.with_clamp(clamp)?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.net.channels()
    }

    pub fn rate(&self, y: &[f64]) -> Vec<f64> {
        (0..self.n()).map(|i| self.net.proposal(i, y)).collect()
    }

    /// State at `t = 0`. In kernel mode `y0` is the single history entry.
    pub fn init(&self, y0: &[f64]) -> Result<LnpState> {
        let n = self.n();
        if y0.len() != n {
            return Err(Error::Mismatch(format!("y0 has {} entries, network has {n}", y0.len())));
        }
        if let Some(v) = y0.iter().find(|v| !v.is_finite()) {
            return Err(Error::config(format!("initial trace {v} is not finite")));
        }
        let mut y = y0.to_vec();
        let mut history = Vec::new();
        if let Some(k) = &self.kernel {
            history = (0..n)
                .map(|i| {
                    let mut h = SpikeHistory::new(k.horizon());
                    match self.net.clamp()[i] {
                        Some(v) => h.fill(v),
                        None => h.push(y0[i]),
                    }
                    h
                })
                .collect();
        }
        for (i, c) in self.net.clamp().iter().enumerate() {
            if let Some(v) = c {
                y[i] = *v;
            }
        }
        Ok(LnpState {
            t: 0,
            y,
            lambda: vec![f64::NAN; n],
            x: vec![f64::NAN; n],
            history,
        })
    }

    /// Advances one step with the draws of step `state.t + 1`.
    pub fn step(&self, state: &mut LnpState, rng: &CounterRng) {
        state.t += 1;
        let n = self.n();
        let mut draws = rng.stream(Domain::Step, state.t);
        for i in 0..n {
            state.lambda[i] = self.net.proposal(i, &state.y);
        }
        for i in 0..n {
            if let Some(v) = self.net.clamp()[i] {
                state.x[i] = v;
                continue;
            }
            let r = draws.uniform(i as u64 + 1);
            state.x[i] = if bernoulli(r, self.eps_step * state.lambda[i]) { 1.0 } else { 0.0 };
        }
        for i in 0..n {
            if self.net.clamp()[i].is_some() {
                continue;
            }
            state.y[i] = match &self.kernel {
                Some(k) => {
                    state.history[i].push(state.x[i]);
                    convolve_trace(&state.history[i], k)
                }
                None => recursive_trace(state.y[i], state.x[i], self.a, self.eps_step),
            };
        }
    }

    /// `(1 − aε)·y + aε·λ(y)`, the expected recursive-trace update.
    pub fn deterministic_step(&self, y: &[f64]) -> Vec<f64> {
        let ae = self.a * self.eps_step;
        (0..self.n())
            .map(|i| (1.0 - ae) * y[i] + ae * self.net.proposal(i, y))
            .collect()
    }

    pub(crate) fn channel_net(&self) -> &ChannelNet {
        &self.net
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn eps_step(&self) -> f64 {
        self.eps_step
    }
}

/// Runs `steps` steps from `y0` (zeros if `None`). The result uses the
/// trajectory layout: θ holds traces, φ rates, x spikes.
pub fn simulate(net: &LnpNetwork, steps: usize, seed: u64, y0: Option<&[f64]>) -> Result<Trajectory> {
    simulate_with(&LnpSimulator::new(net), steps, seed, y0)
}

pub fn simulate_with(sim: &LnpSimulator, steps: usize, seed: u64, y0: Option<&[f64]>) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::config("steps must be at least 1"));
    }
    let n = sim.n();
    let entries = steps.saturating_mul(n);
    if entries > MAX_RECORDED_ENTRIES {
        return Err(Error::Capacity {
            what: "recorded simulation entries",
            actual: entries,
            limit: MAX_RECORDED_ENTRIES,
        });
    }
    let zeros = vec![0.0; n];
    let mut state = sim.init(y0.unwrap_or(&zeros))?;
    let rng = CounterRng::new(seed);
    let mut y = Vec::with_capacity(entries);
    let mut lambda = Vec::with_capacity(entries);
    let mut x = Vec::with_capacity(entries);
    let initial = state.y.clone();
    for _ in 0..steps {
        sim.step(&mut state, &rng);
        y.extend_from_slice(&state.y);
        lambda.extend_from_slice(&state.lambda);
        x.extend_from_slice(&state.x);
    }
    let net = sim.channel_net();
    Trajectory::from_parts(
        net.labels().to_vec(),
        net.clamp().iter().map(Option::is_some).collect(),
        initial,
        y,
        lambda,
        x,
    )
}

/// Writes `t,neuron,spike` for every step and neuron.
pub fn write_raster<W: Write>(traj: &Trajectory, mut out: W) -> Result<()> {
    writeln!(out, "t,neuron,spike")?;
    for t in 1..=traj.steps() {
        for (i, s) in traj.at(Field::X, t).iter().enumerate() {
            writeln!(out, "{t},{i},{}", cell(*s))?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LecamReport {
    pub lambda: f64,
    pub eps: f64,
    pub steps: usize,
    pub tv: f64,
    pub bound: f64,
    #[serde(skip)]
    pub counts: Vec<f64>,
    #[serde(skip)]
    pub poisson: Vec<f64>,
}

impl LecamReport {
    pub fn within_bound(&self) -> bool {
        self.tv <= self.bound
    }
}

/// Compares the spike count of `steps` Bernoulli(ε·λ) steps with the
/// Poisson law of the same mean. The count distribution is built by
/// dynamic programming over steps; mass below 1e-300 at the support edges
/// is dropped.
pub fn lecam_check(lambda: f64, eps: f64, steps: usize) -> Result<LecamReport> {
    let p = eps * lambda;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::config(format!("eps*lambda = {p} is not a probability")));
    }
    if steps == 0 {
        return Err(Error::config("interval must contain at least one step"));
    }
    if steps > MAX_LECAM_STEPS {
        return Err(Error::Capacity {
            what: "LeCam interval steps",
            actual: steps,
            limit: MAX_LECAM_STEPS,
        });
    }
    let counts = count_distribution(&vec![p; steps]);
    let mu = steps as f64 * p;
    let poisson = poisson_pmf(mu, steps);
    let covered: f64 = poisson.iter().sum();
    let l1: f64 = counts.iter().zip(&poisson).map(|(b, q)| (b - q).abs()).sum();
    let tv = 0.5 * (l1 + (1.0 - covered).max(0.0));
    Ok(LecamReport {
        lambda,
        eps,
        steps,
        tv,
        bound: steps as f64 * p * p,
        counts,
        poisson,
    })
}

/// Distribution of the number of successes among independent Bernoullis,
/// indexed `0..=probs.len()`.
pub fn count_distribution(probs: &[f64]) -> Vec<f64> {
    const FLOOR: f64 = 1e-300;
    let mut dist = vec![0.0; probs.len() + 1];
    dist[0] = 1.0;
    let (mut lo, mut hi) = (0usize, 0usize);
    for &p in probs {
        let q = 1.0 - p;
        dist[hi + 1] = 0.0;
        for k in (lo..=hi + 1).rev() {
            let stay = dist[k] * q;
            let moved = if k > lo { dist[k - 1] * p } else { 0.0 };
            dist[k] = stay + moved;
        }
        hi += 1;
        while lo < hi && dist[lo] < FLOOR {
            dist[lo] = 0.0;
            lo += 1;
        }
        while hi > lo && dist[hi] < FLOOR {
            dist[hi] = 0.0;
            hi -= 1;
        }
    }
    dist
}

/// Poisson(`mu`) probabilities for counts `0..=kmax`.
pub fn poisson_pmf(mu: f64, kmax: usize) -> Vec<f64> {
    if mu == 0.0 {
        let mut v = vec![0.0; kmax + 1];
        v[0] = 1.0;
        return v;
    }
    let ln_mu = mu.ln();
    let mut ln_fact = 0.0;
    (0..=kmax)
        .map(|k| {
            if k > 0 {
                ln_fact += (k as f64).ln();
            }
            (-mu + k as f64 * ln_mu - ln_fact).exp()
        })
        .collect()
}
