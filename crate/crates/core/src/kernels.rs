//! Temporal weight functions and trace accumulators.
//!
//! Two kernel families are supported:
//!
//! - `exponential_normalized`: `w[k] ∝ exp(-decay·k)` for `k = 1..=K`,
//!   normalized to sum to one. This is the kernel that folds samples into the
//!   variational parameters.
//! - `discrete_alpha`: `w[k] = a·(1 − a·ε)^k` for `k = 0..K`, the discretized
//!   exponential synaptic kernel.
//!
//! In both cases the first weight applies to the most recent sample.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    ExponentialNormalized,
    DiscreteAlpha,
}

fn default_decay() -> f64 {
    0.5
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: KernelFamily,
    #[serde(default = "default_decay")]
    pub decay: f64,
    #[serde(default = "one")]
    pub a: f64,
    #[serde(default = "one")]
    pub eps_step: f64,
    #[serde(rename = "K")]
    pub horizon: usize,
}

impl Default for KernelSpec {
    /// `exp(-k/2)` normalized over `k = 1..=30`.
    fn default() -> Self {
        Self::exponential(0.5, 30)
    }
}

impl KernelSpec {
    pub fn exponential(decay: f64, horizon: usize) -> Self {
        Self {
            family: KernelFamily::ExponentialNormalized,
            decay,
            a: 1.0,
            eps_step: 1.0,
            horizon,
        }
    }

    pub fn alpha(a: f64, eps_step: f64, horizon: usize) -> Self {
        Self {
            family: KernelFamily::DiscreteAlpha,
            decay: default_decay(),
            a,
            eps_step,
            horizon,
        }
    }

    pub fn build(&self) -> Result<Kernel> {
        match self.family {
            KernelFamily::ExponentialNormalized => Ok(Kernel {
                weights: exponential_normalized(self.decay, self.horizon)?,
                renormalize: true,
            }),
            KernelFamily::DiscreteAlpha => Ok(Kernel {
                weights: discrete_alpha(self.a, self.eps_step, self.horizon)?,
                renormalize: false,
            }),
        }
    }
}

/// Precomputed weights. `weights[0]` multiplies the most recent sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    weights: Vec<f64>,
    renormalize: bool,
}

impl Kernel {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn horizon(&self) -> usize {
        self.weights.len()
    }

    /// Whether partial sums during warm-up are divided by the partial mass.
    pub fn renormalizes(&self) -> bool {
        self.renormalize
    }
}

/// `w[k] = exp(-decay·k) / Σ_{m=1..K} exp(-decay·m)`, returned for `k = 1..=K`.
pub fn exponential_normalized(decay: f64, horizon: usize) -> Result<Vec<f64>> {
    if !(decay > 0.0 && decay.is_finite()) {
        return Err(Error::config(format!("kernel decay must be positive, got {decay}")));
    }
    if horizon == 0 {
        return Err(Error::config("kernel horizon K must be at least 1"));
    }
    let raw: Vec<f64> = (1..=horizon).map(|k| (-decay * k as f64).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// `w[k] = a·(1 − a·ε)^k` for `k = 0..K`.
pub fn discrete_alpha(a: f64, eps_step: f64, horizon: usize) -> Result<Vec<f64>> {
    check_trace_constants(a, eps_step)?;
    if horizon == 0 {
        return Err(Error::config("kernel horizon K must be at least 1"));
    }
    let ratio = 1.0 - a * eps_step;
    Ok((0..horizon).map(|k| a * ratio.powi(k as i32)).collect())
}

/// `a·exp(-a·τ)`.
pub fn continuous_alpha(a: f64, tau: f64) -> Result<f64> {
    if tau < 0.0 {
        return Err(Error::precondition(format!("alpha kernel needs tau >= 0, got {tau}")));
    }
    Ok(a * (-a * tau).exp())
}

pub(crate) fn check_trace_constants(a: f64, eps_step: f64) -> Result<()> {
    let prod = a * eps_step;
    if !(a > 0.0 && eps_step > 0.0 && prod <= 1.0) {
        return Err(Error::config(format!(
            "trace constants need 0 < a·eps_step <= 1, got a={a}, eps_step={eps_step}"
        )));
    }
    Ok(())
}

/// `(1 − a·ε)·prev + a·spike`.
#[inline]
pub fn recursive_trace(prev: f64, spike: f64, a: f64, eps_step: f64) -> f64 {
    (1.0 - a * eps_step) * prev + a * spike
}

/// The last `K` samples of one channel, most recent first.
///
/// Samples are usually spike indicators in `{0, 1}`; the expectation-driven
/// deterministic mode stores probabilities in `[0, 1]` instead.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpikeHistory {
    buf: VecDeque<f64>,
    capacity: usize,
    t: u64,
}

impl SpikeHistory {
    pub fn new(capacity: usize) -> Self {
        Self {
            buf: VecDeque::with_capacity(capacity),
            capacity,
            t: 0,
        }
    }

    pub fn push(&mut self, sample: f64) {
        if self.buf.len() == self.capacity {
            self.buf.pop_back();
        }
        self.buf.push_front(sample);
        self.t += 1;
    }

    /// Replaces the whole buffer with `capacity` copies of `value`.
    pub fn fill(&mut self, value: f64) {
        self.buf.clear();
        self.buf.extend(std::iter::repeat_n(value, self.capacity));
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    /// Number of samples ever pushed.
    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.buf.iter().copied()
    }
}

/// `Σ_k w[k]·h[k]` with `h[0]` the most recent sample. While the buffer is
/// shorter than the kernel, normalized kernels divide by the partial weight
/// mass. An empty history yields 0.
pub fn convolve_trace(history: &SpikeHistory, kernel: &Kernel) -> f64 {
    let mut acc = 0.0;
    let mut mass = 0.0;
    for (w, h) in kernel.weights.iter().zip(history.iter()) {
        acc += w * h;
        mass += w;
    }
    if kernel.renormalize && mass > 0.0 {
        acc / mass
    } else {
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_ratio_and_mass() {
        let w = exponential_normalized(0.5, 30).unwrap();
        assert_eq!(w.len(), 30);
        assert!((w[0] / w[1] - 0.5f64.exp()).abs() < 1e-12);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(exponential_normalized(3.0, 1).unwrap(), vec![1.0]);
    }

    #[test]
    fn exponential_rejects_bad_args() {
        assert!(exponential_normalized(0.0, 5).is_err());
        assert!(exponential_normalized(-1.0, 5).is_err());
        assert!(exponential_normalized(0.5, 0).is_err());
    }

    #[test]
    fn alpha_weights() {
        let w = discrete_alpha(1.0, 1.0, 4).unwrap();
        assert_eq!(w, vec![1.0, 0.0, 0.0, 0.0]);
        let w = discrete_alpha(0.5, 1.0, 4).unwrap();
        assert_eq!(w, vec![0.5, 0.25, 0.125, 0.0625]);
        assert!(discrete_alpha(2.0, 1.0, 4).is_err());
    }

    #[test]
    fn continuous_alpha_values() {
        assert_eq!(continuous_alpha(1.0, 0.0).unwrap(), 1.0);
        assert_eq!(continuous_alpha(2.0, 0.0).unwrap(), 2.0);
        assert!(continuous_alpha(1.0, -0.1).is_err());
    }

    #[test]
    fn convolve_basics() {
        let k = KernelSpec::default().build().unwrap();
        let mut ones = SpikeHistory::new(30);
        let mut zeros = SpikeHistory::new(30);
        for _ in 0..50 {
            ones.push(1.0);
            zeros.push(0.0);
        }
        assert!((convolve_trace(&ones, &k) - 1.0).abs() < 1e-12);
        assert_eq!(convolve_trace(&zeros, &k), 0.0);
        assert_eq!(convolve_trace(&SpikeHistory::new(30), &k), 0.0);
    }

    #[test]
    fn warm_up_renormalizes() {
        let k = KernelSpec::default().build().unwrap();
        let mut h = SpikeHistory::new(30);
        h.push(1.0);
        assert_eq!(convolve_trace(&h, &k), 1.0);
        h.push(0.0);
        let w = k.weights();
        assert!((convolve_trace(&h, &k) - w[1] / (w[0] + w[1])).abs() < 1e-15);
    }

    #[test]
    fn history_truncates() {
        let mut h = SpikeHistory::new(3);
        for s in [1.0, 0.0, 1.0, 1.0] {
            h.push(s);
        }
        assert_eq!(h.iter().collect::<Vec<_>>(), vec![1.0, 1.0, 0.0]);
        assert_eq!(h.time(), 4);
    }

    #[test]
    fn recursive_trace_examples() {
        assert_eq!(recursive_trace(0.0, 0.0, 0.5, 1.0), 0.0);
        assert_eq!(recursive_trace(1.0, 1.0, 0.5, 1.0), 1.0);
        assert_eq!(recursive_trace(0.8, 0.0, 0.5, 1.0), 0.4);
    }

    #[test]
    fn spec_json_roundtrip() {
        let s: KernelSpec = serde_json::from_str(r#"{"family":"exponential_normalized","decay":0.5,"K":30}"#).unwrap();
        assert_eq!(s, KernelSpec::default());
        let a: KernelSpec =
            serde_json::from_str(r#"{"family":"discrete_alpha","a":0.5,"eps_step":1,"K":10}"#).unwrap();
        assert_eq!(a.build().unwrap().weights()[1], 0.25);
    }
}
