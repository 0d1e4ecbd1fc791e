//! Softmax-unit Boltzmann machines, their pairwise event-space
//! parameterization, and brute-force exact-inference oracles.
//!
//! Each unit takes one of two states `A` or `B`. The joint distribution is
//!
//! ```text
//! p(y) ∝ exp( ½ Σ_{i≠j,u,v} [y_i=u][y_j=v] V[i,u,j,v] − Σ_{i,u} [y_i=u] c[i,u] )
//! ```
//!
//! Both symmetric entries of `V` are stored; the ½ undoes the double count.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Diagnostic, Error, Result};
use crate::math::log_sum_exp;

/// Largest model the enumeration oracles accept.
pub const MAX_ENUMERATION_UNITS: usize = 20;
/// Largest model `PairwiseParams::to_dense` materializes.
pub const MAX_DENSE_UNITS: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum State {
    A,
    B,
}

impl State {
    pub const ALL: [State; 2] = [State::A, State::B];

    /// Canonical encoding `A ↦ 0`, `B ↦ 1`.
    pub fn index(self) -> usize {
        match self {
            State::A => 0,
            State::B => 1,
        }
    }

    pub fn from_index(k: usize) -> State {
        if k == 0 {
            State::A
        } else {
            State::B
        }
    }

    pub fn other(self) -> State {
        match self {
            State::A => State::B,
            State::B => State::A,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            State::A => 'A',
            State::B => 'B',
        }
    }
}

/// Index of the event channel `(i, u)` in event space.
#[inline]
pub fn channel(i: usize, u: State) -> usize {
    2 * i + u.index()
}

/// Observed states of visible units.
pub type Observation = BTreeMap<usize, State>;

pub type CouplingKey = (usize, State, usize, State);

#[derive(Clone, Debug, PartialEq)]
pub struct BoltzmannMachine {
    n: usize,
    couplings: BTreeMap<CouplingKey, f64>,
    biases: BTreeMap<(usize, State), f64>,
    visible: BTreeSet<usize>,
    layers: Option<Vec<Vec<usize>>>,
}

impl BoltzmannMachine {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            couplings: BTreeMap::new(),
            biases: BTreeMap::new(),
            visible: BTreeSet::new(),
            layers: None,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stores `value` at both `V[i,u,j,v]` and `V[j,v,i,u]`.
    pub fn set_coupling(&mut self, i: usize, u: State, j: usize, v: State, value: f64) {
        self.couplings.insert((i, u, j, v), value);
        self.couplings.insert((j, v, i, u), value);
    }

    /// Stores a single directed entry. Used by loaders; may break symmetry.
    pub fn set_coupling_entry(&mut self, i: usize, u: State, j: usize, v: State, value: f64) {
        self.couplings.insert((i, u, j, v), value);
    }

    pub fn set_bias(&mut self, i: usize, u: State, value: f64) {
        self.biases.insert((i, u), value);
    }

    pub fn set_visible(&mut self, visible: impl IntoIterator<Item = usize>) {
        self.visible = visible.into_iter().collect();
    }

    pub fn set_layers(&mut self, layers: Option<Vec<Vec<usize>>>) {
        self.layers = layers;
    }

    pub fn coupling(&self, i: usize, u: State, j: usize, v: State) -> f64 {
        self.couplings.get(&(i, u, j, v)).copied().unwrap_or(0.0)
    }

    pub fn bias(&self, i: usize, u: State) -> f64 {
        self.biases.get(&(i, u)).copied().unwrap_or(0.0)
    }

    pub fn couplings(&self) -> impl Iterator<Item = (CouplingKey, f64)> + '_ {
        self.couplings.iter().map(|(k, v)| (*k, *v))
    }

    pub fn biases(&self) -> impl Iterator<Item = ((usize, State), f64)> + '_ {
        self.biases.iter().map(|(k, v)| (*k, *v))
    }

    pub fn visible(&self) -> &BTreeSet<usize> {
        &self.visible
    }

    pub fn hidden(&self) -> Vec<usize> {
        (0..self.n).filter(|i| !self.visible.contains(i)).collect()
    }

    pub fn layers(&self) -> Option<&[Vec<usize>]> {
        self.layers.as_deref()
    }

    /// Every violated invariant; empty iff the model is valid.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        for (&(i, u, j, v), &value) in &self.couplings {
            for (idx, loc) in [(i, "V.i"), (j, "V.j")] {
                if idx >= self.n {
                    out.push(Diagnostic::IndexOutOfRange {
                        location: format!("{loc} of V[{i},{},{j},{}]", u.symbol(), v.symbol()),
                        index: idx,
                        n: self.n,
                    });
                }
            }
            if !value.is_finite() {
                out.push(Diagnostic::NonFinite {
                    location: format!("V[{i},{},{j},{}]", u.symbol(), v.symbol()),
                });
            }
            if i == j {
                out.push(Diagnostic::SelfCoupling {
                    i,
                    u: u.symbol(),
                    v: v.symbol(),
                });
                continue;
            }
            // Report each asymmetric pair once, from its smaller key.
            let back = self.coupling(j, v, i, u);
            let mirrored_is_stored = self.couplings.contains_key(&(j, v, i, u));
            if back != value && (!mirrored_is_stored || (i, u) < (j, v)) {
                out.push(Diagnostic::Asymmetric {
                    i,
                    u: u.symbol(),
                    j,
                    v: v.symbol(),
                    forward: value,
                    backward: back,
                });
            }
        }
        for (&(i, u), &value) in &self.biases {
            if i >= self.n {
                out.push(Diagnostic::IndexOutOfRange {
                    location: format!("c[{i},{}]", u.symbol()),
                    index: i,
                    n: self.n,
                });
            }
            if !value.is_finite() {
                out.push(Diagnostic::NonFinite {
                    location: format!("c[{i},{}]", u.symbol()),
                });
            }
        }
        for &i in &self.visible {
            if i >= self.n {
                out.push(Diagnostic::IndexOutOfRange {
                    location: "visible".into(),
                    index: i,
                    n: self.n,
                });
            }
        }
        if let Some(layers) = &self.layers {
            for &i in layers.iter().flatten() {
                if i >= self.n {
                    out.push(Diagnostic::IndexOutOfRange {
                        location: "layers".into(),
                        index: i,
                        n: self.n,
                    });
                }
            }
        }
        out
    }

    /// Diagnostics for an observation against this model's visible set.
    pub fn validate_observation(&self, obs: &Observation) -> Vec<Diagnostic> {
        obs.keys()
            .filter(|i| !self.visible.contains(i))
            .map(|&i| Diagnostic::ObservedNotVisible { i })
            .collect()
    }

    fn ensure_valid(&self) -> Result<()> {
        let d = self.validate();
        if d.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(d))
        }
    }

    /// Negated exponent of the joint, so that `p(y) ∝ exp(-energy(y))`.
    pub fn energy(&self, y: &[State]) -> Result<f64> {
        if y.len() != self.n {
            return Err(Error::precondition(format!(
                "assignment covers {} units, model has {}",
                y.len(),
                self.n
            )));
        }
        let mut pair = 0.0;
        for (&(i, u, j, v), &value) in &self.couplings {
            if y[i] == u && y[j] == v {
                pair += value;
            }
        }
        let mut field = 0.0;
        for (&(i, u), &value) in &self.biases {
            if y[i] == u {
                field += value;
            }
        }
        Ok(-0.5 * pair + field)
    }

    /// The event-space parameters used by every inference engine.
    pub fn derive_pairwise(&self) -> Result<PairwiseParams> {
        self.ensure_valid()?;
        let mut weights = BTreeMap::new();
        for &(i, _, j, v) in self.couplings.keys() {
            for u in State::ALL {
                let w = self.coupling(i, u, j, v) - self.coupling(i, u.other(), j, v);
                weights.insert((i, u, j, v), w);
            }
        }
        let biases = (0..self.n)
            .map(|i| {
                let a = self.bias(i, State::A);
                let b = self.bias(i, State::B);
                [a - b, b - a]
            })
            .collect();
        let mut params = PairwiseParams {
            n: self.n,
            weights,
            biases,
            blanket: Vec::new(),
        };
        params.recompute_blanket();
        Ok(params)
    }

    fn enumeration_guard(&self) -> Result<()> {
        if self.n > MAX_ENUMERATION_UNITS {
            return Err(Error::Capacity {
                what: "units for exact enumeration",
                actual: self.n,
                limit: MAX_ENUMERATION_UNITS,
            });
        }
        Ok(())
    }

    /// Dense `(2n)²` couplings and `2n` biases for the enumeration loops.
    fn dense_energy_terms(&self) -> (Vec<(usize, usize, f64)>, Vec<f64>) {
        let pairs = self
            .couplings
            .iter()
            .map(|(&(i, u, j, v), &value)| (channel(i, u), channel(j, v), value))
            .collect();
        let mut field = vec![0.0; 2 * self.n];
        for (&(i, u), &value) in &self.biases {
            field[channel(i, u)] = value;
        }
        (pairs, field)
    }

    /// Exact joint over all `2ⁿ` assignments.
    pub fn exact_joint(&self) -> Result<JointTable> {
        self.ensure_valid()?;
        self.enumeration_guard()?;
        let n = self.n;
        let (pairs, field) = self.dense_energy_terms();
        let log_weights: Vec<f64> = (0..1usize << n)
            .into_par_iter()
            .map(|bits| -assignment_energy(bits, &pairs, &field))
            .collect();
        let log_z = log_sum_exp(&log_weights);
        let probs = log_weights.iter().map(|lw| (lw - log_z).exp()).collect();
        Ok(JointTable { n, probs, log_z })
    }

    /// Posterior marginals of every hidden unit given a full observation of
    /// the visible units, by clamped enumeration.
    pub fn exact_posterior_marginals(&self, obs: &Observation) -> Result<BTreeMap<usize, [f64; 2]>> {
        self.ensure_valid()?;
        self.enumeration_guard()?;
        let bad = self.validate_observation(obs);
        if !bad.is_empty() {
            return Err(Error::Invalid(bad));
        }
        if let Some(i) = self.visible.iter().find(|i| !obs.contains_key(i)) {
            return Err(Error::precondition(format!("visible unit {i} is not observed")));
        }
        let hidden = self.hidden();
        let (pairs, field) = self.dense_energy_terms();
        let mut base = 0usize;
        for (&i, &s) in obs {
            if s == State::B {
                base |= 1 << i;
            }
        }
        let log_weights: Vec<f64> = (0..1usize << hidden.len())
            .into_par_iter()
            .map(|h| {
                let mut bits = base;
                for (k, &i) in hidden.iter().enumerate() {
                    if h >> k & 1 == 1 {
                        bits |= 1 << i;
                    }
                }
                -assignment_energy(bits, &pairs, &field)
            })
            .collect();
        let log_z = log_sum_exp(&log_weights);
        let mut out: BTreeMap<usize, [f64; 2]> = hidden.iter().map(|&i| (i, [0.0, 0.0])).collect();
        for (h, lw) in log_weights.iter().enumerate() {
            let p = (lw - log_z).exp();
            for (k, &i) in hidden.iter().enumerate() {
                out.get_mut(&i).unwrap()[h >> k & 1] += p;
            }
        }
        Ok(out)
    }
}

/// Energy of the assignment encoded by `bits` (bit `i` set iff `y_i = B`).
fn assignment_energy(bits: usize, pairs: &[(usize, usize, f64)], field: &[f64]) -> f64 {
    let on = |ch: usize| (bits >> (ch / 2) & 1) == ch % 2;
    let mut pair = 0.0;
    for &(a, b, value) in pairs {
        if on(a) && on(b) {
            pair += value;
        }
    }
    let mut lin = 0.0;
    for (ch, &value) in field.iter().enumerate() {
        if on(ch) {
            lin += value;
        }
    }
    -0.5 * pair + lin
}

/// Probabilities over all assignments; index bit `i` set iff `y_i = B`.
#[derive(Clone, Debug)]
pub struct JointTable {
    pub n: usize,
    pub probs: Vec<f64>,
    pub log_z: f64,
}

impl JointTable {
    pub fn assignment(&self, index: usize) -> Vec<State> {
        (0..self.n).map(|i| State::from_index(index >> i & 1)).collect()
    }
}

/// Event-space parameters: `W[i,u,j,v] = V[i,u,j,v] − V[i,ū,j,v]` and
/// `b[i,u] = c[i,u] − c[i,ū]`, with the Markov blanket of each unit.
#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseParams {
    n: usize,
    weights: BTreeMap<CouplingKey, f64>,
    biases: Vec<[f64; 2]>,
    blanket: Vec<Vec<usize>>,
}

impl PairwiseParams {
    /// Builds parameters directly, e.g. from a file. Blankets are derived.
    pub fn from_parts(n: usize, weights: BTreeMap<CouplingKey, f64>, biases: Vec<[f64; 2]>) -> Result<Self> {
        if biases.len() != n {
            return Err(Error::config(format!("expected {n} bias pairs, got {}", biases.len())));
        }
        let mut d = Vec::new();
        for &(i, u, j, v) in weights.keys() {
            if i >= n || j >= n {
                d.push(Diagnostic::IndexOutOfRange {
                    location: format!("W[{i},{},{j},{}]", u.symbol(), v.symbol()),
                    index: i.max(j),
                    n,
                });
            } else if i == j {
                d.push(Diagnostic::SelfCoupling {
                    i,
                    u: u.symbol(),
                    v: v.symbol(),
                });
            }
        }
        if !d.is_empty() {
            return Err(Error::Invalid(d));
        }
        let mut p = Self {
            n,
            weights,
            biases,
            blanket: Vec::new(),
        };
        p.recompute_blanket();
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, u: State, j: usize, v: State) -> f64 {
        self.weights.get(&(i, u, j, v)).copied().unwrap_or(0.0)
    }

    pub fn bias(&self, i: usize, u: State) -> f64 {
        self.biases[i][u.index()]
    }

    pub fn blanket(&self, i: usize) -> &[usize] {
        &self.blanket[i]
    }

    pub fn weights(&self) -> impl Iterator<Item = (CouplingKey, f64)> + '_ {
        self.weights.iter().map(|(k, v)| (*k, *v))
    }

    pub(crate) fn weight_mut(&mut self, i: usize, u: State, j: usize, v: State) -> &mut f64 {
        self.weights.entry((i, u, j, v)).or_insert(0.0)
    }

    pub(crate) fn bias_mut(&mut self, i: usize, u: State) -> &mut f64 {
        &mut self.biases[i][u.index()]
    }

    pub(crate) fn recompute_blanket(&mut self) {
        let mut sets = vec![BTreeSet::new(); self.n];
        for (&(i, _, j, _), &w) in &self.weights {
            if w != 0.0 {
                sets[i].insert(j);
            }
        }
        self.blanket = sets.into_iter().map(|s| s.into_iter().collect()).collect();
    }

    /// Dense `2n × 2n` matrix, row = receiving channel `(i,u)`.
    pub fn to_dense(&self) -> Result<Vec<Vec<f64>>> {
        if self.n > MAX_DENSE_UNITS {
            return Err(Error::Capacity {
                what: "units for dense materialization",
                actual: self.n,
                limit: MAX_DENSE_UNITS,
            });
        }
        let mut m = vec![vec![0.0; 2 * self.n]; 2 * self.n];
        for (&(i, u, j, v), &w) in &self.weights {
            m[channel(i, u)][channel(j, v)] = w;
        }
        Ok(m)
    }
}

// ---------------------------------------------------------------------------
// File format

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingEntry {
    pub i: usize,
    pub u: State,
    pub j: usize,
    pub v: State,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasEntry {
    pub i: usize,
    pub u: State,
    pub value: f64,
}

/// JSON document describing a model.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub n: usize,
    #[serde(default)]
    pub visible: Vec<usize>,
    #[serde(rename = "V", default)]
    pub couplings: Vec<CouplingEntry>,
    #[serde(rename = "c", default)]
    pub biases: Vec<BiasEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<Vec<usize>>>,
}

impl ModelFile {
    /// Builds the model, rejecting duplicates and any invariant violation.
    pub fn into_model(self) -> Result<BoltzmannMachine> {
        let mut bm = BoltzmannMachine::new(self.n);
        let mut diags = Vec::new();
        let mut seen = BTreeSet::new();
        for e in &self.couplings {
            if !seen.insert((e.i, e.u, e.j, e.v)) {
                diags.push(Diagnostic::Duplicate {
                    location: format!("V[{},{},{},{}]", e.i, e.u.symbol(), e.j, e.v.symbol()),
                });
            }
            bm.set_coupling_entry(e.i, e.u, e.j, e.v, e.value);
        }
        let mut seen = BTreeSet::new();
        for e in &self.biases {
            if !seen.insert((e.i, e.u)) {
                diags.push(Diagnostic::Duplicate {
                    location: format!("c[{},{}]", e.i, e.u.symbol()),
                });
            }
            bm.set_bias(e.i, e.u, e.value);
        }
        let mut seen = BTreeSet::new();
        for &i in &self.visible {
            if !seen.insert(i) {
                diags.push(Diagnostic::Duplicate {
                    location: format!("visible[{i}]"),
                });
            }
        }
        bm.set_visible(self.visible.iter().copied());
        bm.set_layers(self.layers);
        diags.extend(bm.validate());
        if diags.is_empty() {
            Ok(bm)
        } else {
            Err(Error::Invalid(diags))
        }
    }

    pub fn from_model(bm: &BoltzmannMachine) -> Self {
        Self {
            n: bm.n,
            visible: bm.visible.iter().copied().collect(),
            couplings: bm
                .couplings()
                .map(|((i, u, j, v), value)| CouplingEntry { i, u, j, v, value })
                .collect(),
            biases: bm
                .biases()
                .map(|((i, u), value)| BiasEntry { i, u, value })
                .collect(),
            layers: bm.layers.clone(),
        }
    }
}

impl BoltzmannMachine {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.into_model()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from_model(self))?)
    }
}

/// JSON document describing [`PairwiseParams`]: `W` as `{i,u,j,v,value}`
/// entries and `b` as one `[b_A, b_B]` pair per unit.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairwiseFile {
    pub n: usize,
    #[serde(rename = "W")]
    pub weights: Vec<CouplingEntry>,
    pub b: Vec<[f64; 2]>,
}

impl PairwiseParams {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: PairwiseFile = serde_json::from_str(text)?;
        let mut weights = BTreeMap::new();
        let mut d = Vec::new();
        for e in file.weights {
            if !e.value.is_finite() {
                d.push(Diagnostic::NonFinite {
                    location: format!("W[{},{},{},{}]", e.i, e.u.symbol(), e.j, e.v.symbol()),
                });
            }
            if weights.insert((e.i, e.u, e.j, e.v), e.value).is_some() {
                d.push(Diagnostic::Duplicate {
                    location: format!("W[{},{},{},{}]", e.i, e.u.symbol(), e.j, e.v.symbol()),
                });
            }
        }
        for (i, pair) in file.b.iter().enumerate() {
            if pair.iter().any(|v| !v.is_finite()) {
                d.push(Diagnostic::NonFinite {
                    location: format!("b[{i}]"),
                });
            }
        }
        if !d.is_empty() {
            return Err(Error::Invalid(d));
        }
        Self::from_parts(file.n, weights, file.b)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = PairwiseFile {
            n: self.n,
            weights: self
                .weights()
                .filter(|&(_, value)| value != 0.0)
                .map(|((i, u, j, v), value)| CouplingEntry { i, u, j, v, value })
                .collect(),
            b: self.biases.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }
}
