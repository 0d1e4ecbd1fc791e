//! Network rewrites that turn pairwise Boltzmann parameters into a
//! bias-free, event-level, sign-segregated spiking network, plus the
//! bookkeeping to read results back in original coordinates.
//!
//! - [`shift`] and [`remove_biases`] move bias mass into the weights using
//!   the invariance `b_iu += C, W[iu,jv] += C, W[iu,jv̄] += C`.
//! - [`event_split`] gives each event `[y_i = u]` its own neuron.
//! - [`dale_split`] duplicates neurons whose outgoing weights mix signs into
//!   an excitatory and an inhibitory copy with the same incoming row.

use serde::{Deserialize, Serialize};

use crate::error::{Diagnostic, Error, Result};
use crate::inference::{ChannelLabel, Slot, Trajectory};
use crate::kernels::{check_trace_constants, KernelSpec};
use crate::model::{channel, PairwiseParams, State, MAX_DENSE_UNITS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Excitatory,
    Inhibitory,
}

/// Neuron-level network. Row `i` of `W` holds the incoming weights of
/// neuron `i`; column `j` the outgoing weights of neuron `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct LnpNetwork {
    n: usize,
    w: Vec<f64>,
    e: Vec<f64>,
    a: f64,
    eps_step: f64,
    sign: Option<Vec<Sign>>,
    kernel: Option<KernelSpec>,
}

impl LnpNetwork {
    pub fn new(w: Vec<Vec<f64>>, e: Vec<f64>, a: f64, eps_step: f64) -> Result<Self> {
        let n = e.len();
        if w.len() != n || w.iter().any(|r| r.len() != n) {
            return Err(Error::Mismatch(format!("W must be {n}x{n} to match e")));
        }
        Self::from_flat(n, w.into_iter().flatten().collect(), e, a, eps_step)
    }

    fn from_flat(n: usize, w: Vec<f64>, e: Vec<f64>, a: f64, eps_step: f64) -> Result<Self> {
        if n > MAX_DENSE_UNITS {
            return Err(Error::Capacity {
                what: "neurons in a dense network",
                actual: n,
                limit: MAX_DENSE_UNITS,
            });
        }
        check_trace_constants(a, eps_step)?;
        let net = Self {
            n,
            w,
            e,
            a,
            eps_step,
            sign: None,
            kernel: None,
        };
        let d = net.validate();
        if d.is_empty() {
            Ok(net)
        } else {
            Err(Error::Invalid(d))
        }
    }

    /// Tags outgoing signs; rejected if any column disagrees with its tag.
    pub fn with_sign(mut self, sign: Vec<Sign>) -> Result<Self> {
        if sign.len() != self.n {
            return Err(Error::Mismatch(format!("{} sign tags for {} neurons", sign.len(), self.n)));
        }
        self.sign = Some(sign);
        let d = self.validate();
        if d.is_empty() {
            Ok(self)
        } else {
            Err(Error::Invalid(d))
        }
    }

    /// Simulate traces by convolution with this kernel instead of the
    /// recursive trace.
    pub fn with_kernel(mut self, kernel: Option<KernelSpec>) -> Result<Self> {
        if let Some(k) = &kernel {
            k.build()?;
        }
        self.kernel = kernel;
        Ok(self)
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut d = Vec::new();
        for (k, &v) in self.w.iter().enumerate() {
            if !v.is_finite() {
                d.push(Diagnostic::NonFinite {
                    location: format!("W[{},{}]", k / self.n, k % self.n),
                });
            }
        }
        for (i, &v) in self.e.iter().enumerate() {
            if !v.is_finite() {
                d.push(Diagnostic::NonFinite {
                    location: format!("e[{i}]"),
                });
            }
        }
        if let Some(sign) = &self.sign {
            for (j, s) in sign.iter().enumerate() {
                let bad = (0..self.n).any(|i| {
                    let w = self.weight(i, j);
                    match s {
                        Sign::Excitatory => w < 0.0,
                        Sign::Inhibitory => w > 0.0,
                    }
                });
                if bad {
                    d.push(Diagnostic::DaleViolation { neuron: j });
                }
            }
        }
        d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Weight from neuron `j` onto neuron `i`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.n..(i + 1) * self.n]
    }

    /// Nonzero incoming weights of neuron `i` as `(source, weight)`,
    /// ascending by source.
    pub fn incoming(&self, i: usize) -> Vec<(usize, f64)> {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(j, &w)| (j, w))
            .collect()
    }

    pub fn e(&self) -> &[f64] {
        &self.e
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn eps_step(&self) -> f64 {
        self.eps_step
    }

    pub fn sign(&self) -> Option<&[Sign]> {
        self.sign.as_deref()
    }

    pub fn kernel(&self) -> Option<&KernelSpec> {
        self.kernel.as_ref()
    }

    /// Whether every column is single-signed.
    pub fn satisfies_dale(&self) -> bool {
        (0..self.n).all(|j| {
            let col = (0..self.n).map(|i| self.weight(i, j));
            !(col.clone().any(|w| w > 0.0) && col.clone().any(|w| w < 0.0))
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(text)?;
        file.into_network()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&NetworkFile::from_network(self))?)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightEntry {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightsRepr {
    Dense(Vec<Vec<f64>>),
    Sparse(Vec<WeightEntry>),
}

/// JSON document describing an [`LnpNetwork`]. `W` is either a dense
/// matrix or a list of `{i, j, value}` triplets.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub n: usize,
    #[serde(rename = "W")]
    pub w: WeightsRepr,
    pub e: Vec<f64>,
    pub a: f64,
    pub eps_step: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign: Option<Vec<Sign>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
}

impl NetworkFile {
    pub fn into_network(self) -> Result<LnpNetwork> {
        let n = self.n;
        if self.e.len() != n {
            return Err(Error::Mismatch(format!("e has {} entries, n = {n}", self.e.len())));
        }
        let w = match self.w {
            WeightsRepr::Dense(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Mismatch(format!("dense W must be {n}x{n}")));
                }
                rows.into_iter().flatten().collect()
            }
            WeightsRepr::Sparse(entries) => {
                if n > MAX_DENSE_UNITS {
                    return Err(Error::Capacity {
                        what: "neurons in a dense network",
                        actual: n,
                        limit: MAX_DENSE_UNITS,
                    });
                }
                let mut w = vec![0.0; n * n];
                let mut seen = std::collections::BTreeSet::new();
                let mut d = Vec::new();
                for t in entries {
                    if t.i >= n || t.j >= n {
                        d.push(Diagnostic::IndexOutOfRange {
                            location: format!("W[{},{}]", t.i, t.j),
                            index: t.i.max(t.j),
                            n,
                        });
                    } else if !seen.insert((t.i, t.j)) {
                        d.push(Diagnostic::Duplicate {
                            location: format!("W[{},{}]", t.i, t.j),
                        });
                    } else {
                        w[t.i * n + t.j] = t.value;
                    }
                }
                if !d.is_empty() {
                    return Err(Error::Invalid(d));
                }
                w
            }
        };
        let mut net = LnpNetwork::from_flat(n, w, self.e, self.a, self.eps_step)?;
        if let Some(sign) = self.sign {
            net = net.with_sign(sign)?;
        }
        net.with_kernel(self.kernel)
    }

    pub fn from_network(net: &LnpNetwork) -> Self {
        Self {
            n: net.n,
            w: WeightsRepr::Dense((0..net.n).map(|i| net.row(i).to_vec()).collect()),
            e: net.e.clone(),
            a: net.a,
            eps_step: net.eps_step,
            sign: net.sign.clone(),
            kernel: net.kernel,
        }
    }
}

// ---------------------------------------------------------------------------
// Records

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Identity,
    BiasRemoval,
    EventSplit,
    DaleSplit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    EventA,
    EventB,
    ExcitatoryCopy,
    InhibitoryCopy,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InverseEntry {
    pub index: usize,
    pub role: Role,
}

/// Index mapping of one rewrite. `forward[old]` lists the new indices
/// derived from `old`; `inverse[new]` names its origin and role.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformRecord {
    pub kind: TransformKind,
    pub forward: Vec<Vec<usize>>,
    pub inverse: Vec<InverseEntry>,
}

impl TransformRecord {
    pub fn identity(kind: TransformKind, size: usize) -> Self {
        Self {
            kind,
            forward: (0..size).map(|k| vec![k]).collect(),
            inverse: (0..size)
                .map(|k| InverseEntry {
                    index: k,
                    role: Role::Identity,
                })
                .collect(),
        }
    }

    fn from_inverse(kind: TransformKind, old_size: usize, inverse: Vec<InverseEntry>) -> Self {
        let mut forward = vec![Vec::new(); old_size];
        for (k, inv) in inverse.iter().enumerate() {
            forward[inv.index].push(k);
        }
        Self { kind, forward, inverse }
    }

    /// Whether `forward` and `inverse` describe the same mapping and every
    /// new index has exactly one origin.
    pub fn is_consistent(&self) -> bool {
        let mut hits = vec![0usize; self.inverse.len()];
        for (old, news) in self.forward.iter().enumerate() {
            for &k in news {
                match self.inverse.get(k) {
                    Some(inv) if inv.index == old => hits[k] += 1,
                    _ => return false,
                }
            }
        }
        hits.iter().all(|&h| h == 1)
    }
}

// ---------------------------------------------------------------------------
// Rewrites

/// `b_iu += C; W[iu,jv] += C; W[iu,jv̄] += C`. Leaves every inference
/// algorithm unchanged on complementary `θ_j`.
pub fn shift(params: &PairwiseParams, i: usize, j: usize, u: State, v: State, c: f64) -> Result<PairwiseParams> {
    if i >= params.n() || !params.blanket(i).contains(&j) {
        return Err(Error::precondition(format!("unit {j} is not in the blanket of unit {i}")));
    }
    let mut p = params.clone();
    *p.bias_mut(i, u) += c;
    *p.weight_mut(i, u, j, v) += c;
    *p.weight_mut(i, u, j, v.other()) += c;
    p.recompute_blanket();
    Ok(p)
}

/// Spreads every bias `b_iu` evenly over the blanket of `i` by shifts with
/// `C = −b_iu/|M(i)|`, then stores `b_iu = 0` exactly.
pub fn remove_biases(params: &PairwiseParams) -> Result<(PairwiseParams, TransformRecord)> {
    let n = params.n();
    let mut p = params.clone();
    for i in 0..n {
        let blanket = params.blanket(i).to_vec();
        for u in State::ALL {
            let b = params.bias(i, u);
            if b == 0.0 {
                continue;
            }
            if blanket.is_empty() {
                return Err(Error::precondition(format!(
                    "unit {i} has bias {b} on {} but an empty blanket",
                    u.symbol()
                )));
            }
            let c = -b / blanket.len() as f64;
            for &j in &blanket {
                for v in State::ALL {
                    *p.weight_mut(i, u, j, v) += c;
                }
            }
            *p.bias_mut(i, u) = 0.0;
        }
    }
    p.recompute_blanket();
    Ok((p, TransformRecord::identity(TransformKind::BiasRemoval, n)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventSplitOptions {
    /// Carry `−b` into the external input instead of requiring zero biases.
    pub bias_to_input: bool,
    pub a: f64,
    pub eps_step: f64,
    pub kernel: Option<KernelSpec>,
}

impl Default for EventSplitOptions {
    fn default() -> Self {
        Self {
            bias_to_input: false,
            a: 1.0,
            eps_step: 1.0,
            kernel: None,
        }
    }
}

/// One neuron per event: neuron `2i+u` receives `W[i,u,j,v]` from neuron
/// `2j+v`.
pub fn event_split(params: &PairwiseParams, opts: &EventSplitOptions) -> Result<(LnpNetwork, TransformRecord)> {
    let n = params.n();
    if !opts.bias_to_input {
        if let Some(i) = (0..n).find(|&i| State::ALL.iter().any(|&u| params.bias(i, u) != 0.0)) {
            return Err(Error::precondition(format!(
                "unit {i} has a nonzero bias; remove biases first or carry them into the input"
            )));
        }
    }
    if 2 * n > MAX_DENSE_UNITS {
        return Err(Error::Capacity {
            what: "neurons in a dense network",
            actual: 2 * n,
            limit: MAX_DENSE_UNITS,
        });
    }
    let m = 2 * n;
    let mut w = vec![0.0; m * m];
    for ((i, u, j, v), value) in params.weights() {
        w[channel(i, u) * m + channel(j, v)] = value;
    }
    let e = (0..m)
        .map(|k| if opts.bias_to_input { -params.bias(k / 2, State::from_index(k % 2)) } else { 0.0 })
        .collect();
    let net = LnpNetwork::from_flat(m, w, e, opts.a, opts.eps_step)?.with_kernel(opts.kernel)?;
    let inverse = (0..m)
        .map(|k| InverseEntry {
            index: k / 2,
            role: if k % 2 == 0 { Role::EventA } else { Role::EventB },
        })
        .collect();
    Ok((net, TransformRecord::from_inverse(TransformKind::EventSplit, n, inverse)))
}

/// Duplicates each neuron with outgoing weights of both signs into an
/// excitatory and an inhibitory copy (consecutive indices, shared incoming
/// row). Single-signed neurons keep one copy; neurons with no outgoing
/// weight are tagged excitatory.
pub fn dale_split(net: &LnpNetwork) -> Result<(LnpNetwork, TransformRecord)> {
    let n = net.n;
    let mut inverse = Vec::new();
    let mut sign = Vec::new();
    for j in 0..n {
        let col = || (0..n).map(|i| net.weight(i, j));
        let pos = col().any(|w| w > 0.0);
        let neg = col().any(|w| w < 0.0);
        if pos && neg {
            inverse.push(InverseEntry {
                index: j,
                role: Role::ExcitatoryCopy,
            });
            sign.push(Sign::Excitatory);
            inverse.push(InverseEntry {
                index: j,
                role: Role::InhibitoryCopy,
            });
            sign.push(Sign::Inhibitory);
        } else {
            inverse.push(InverseEntry {
                index: j,
                role: Role::Identity,
            });
            sign.push(if neg { Sign::Inhibitory } else { Sign::Excitatory });
        }
    }
    let m = inverse.len();
    if m > MAX_DENSE_UNITS {
        return Err(Error::Capacity {
            what: "neurons in a dense network",
            actual: m,
            limit: MAX_DENSE_UNITS,
        });
    }
    let mut w = vec![0.0; m * m];
    for (k, target) in inverse.iter().enumerate() {
        for (c, source) in inverse.iter().enumerate() {
            let value = net.weight(target.index, source.index);
            let keep = match source.role {
                Role::ExcitatoryCopy => value > 0.0,
                Role::InhibitoryCopy => value < 0.0,
                _ => true,
            };
            if keep {
                w[k * m + c] = value;
            }
        }
    }
    let e = inverse.iter().map(|inv| net.e[inv.index]).collect();
    let out = LnpNetwork::from_flat(m, w, e, net.a, net.eps_step)?
        .with_kernel(net.kernel)?
        .with_sign(sign)?;
    Ok((out, TransformRecord::from_inverse(TransformKind::DaleSplit, n, inverse)))
}

// ---------------------------------------------------------------------------
// Chains

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformOp {
    RemoveBias,
    EventSplit,
    DaleSplit,
}

impl std::str::FromStr for TransformOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "remove-bias" => Ok(TransformOp::RemoveBias),
            "event-split" => Ok(TransformOp::EventSplit),
            "dale-split" => Ok(TransformOp::DaleSplit),
            other => Err(Error::config(format!("unknown transform op {other:?}"))),
        }
    }
}

/// Result of a transform chain: still pairwise, or already a neuron network.
#[derive(Clone, Debug, PartialEq)]
pub enum Transformed {
    Pairwise(PairwiseParams),
    Network(LnpNetwork),
}

/// Applies `ops` in order. Illegal orders (a split before the event split,
/// bias removal after it) are configuration errors.
pub fn apply_chain(
    params: &PairwiseParams,
    ops: &[TransformOp],
    opts: &EventSplitOptions,
) -> Result<(Transformed, Vec<TransformRecord>)> {
    let mut cur = Transformed::Pairwise(params.clone());
    let mut records = Vec::new();
    for op in ops {
        let (next, rec) = match (op, &cur) {
            (TransformOp::RemoveBias, Transformed::Pairwise(p)) => {
                let (p, r) = remove_biases(p)?;
                (Transformed::Pairwise(p), r)
            }
            (TransformOp::EventSplit, Transformed::Pairwise(p)) => {
                let (net, r) = event_split(p, opts).map_err(|e| match e {
                    Error::Precondition(m) => Error::Config(m),
                    other => other,
                })?;
                (Transformed::Network(net), r)
            }
            (TransformOp::DaleSplit, Transformed::Network(net)) => {
                let (net, r) = dale_split(net)?;
                (Transformed::Network(net), r)
            }
            (TransformOp::DaleSplit, Transformed::Pairwise(_)) => {
                return Err(Error::config("dale-split needs event-split earlier in the chain"));
            }
            (op, Transformed::Network(_)) => {
                return Err(Error::config(format!("{op:?} cannot follow event-split")));
            }
        };
        cur = next;
        records.push(rec);
    }
    Ok((cur, records))
}

/// Original event channel (`2i+u`) of every index of the final network.
pub fn chain_origins(n_units: usize, records: &[TransformRecord]) -> Result<Vec<usize>> {
    let mut origin: Vec<usize> = (0..2 * n_units).collect();
    let mut units_space = true;
    for rec in records {
        match rec.kind {
            TransformKind::Identity | TransformKind::BiasRemoval => {
                let size = if units_space { n_units } else { origin.len() };
                if rec.inverse.len() != size {
                    return Err(Error::Mismatch(format!(
                        "{:?} record covers {} indices, expected {size}",
                        rec.kind,
                        rec.inverse.len()
                    )));
                }
            }
            TransformKind::EventSplit => {
                if !units_space || rec.inverse.len() != 2 * n_units {
                    return Err(Error::Mismatch("event-split record does not fit the chain".into()));
                }
                origin = rec
                    .inverse
                    .iter()
                    .map(|inv| {
                        let u = if inv.role == Role::EventB { State::B } else { State::A };
                        origin[channel(inv.index, u)]
                    })
                    .collect();
                units_space = false;
            }
            TransformKind::DaleSplit => {
                if units_space || rec.forward.len() != origin.len() {
                    return Err(Error::Mismatch("dale-split record does not fit the chain".into()));
                }
                origin = rec.inverse.iter().map(|inv| origin[inv.index]).collect();
            }
        }
        if !rec.is_consistent() {
            return Err(Error::Mismatch(format!("{:?} record is inconsistent", rec.kind)));
        }
    }
    Ok(origin)
}

/// Per-channel values of the original model carried to the final network.
pub fn forward_values<T: Copy>(values: &[T], origins: &[usize]) -> Vec<T> {
    origins.iter().map(|&c| values[c]).collect()
}

/// Final-network indices grouped by original unit, for sequential
/// schedules on split networks.
pub fn origin_groups(n_units: usize, origins: &[usize]) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); n_units];
    for (k, &c) in origins.iter().enumerate() {
        groups[c / 2].push(k);
    }
    groups
}

/// Trajectory mapped back to original channels, with the residuals that
/// exact equivalence would force to zero.
#[derive(Clone, Debug)]
pub struct Readback {
    pub trajectory: Trajectory,
    /// Per unit, per step: `θ_iA + θ_iB − 1`.
    pub event_residual: Vec<Vec<f64>>,
    /// Final-network index pairs `(excitatory, inhibitory)` of Dale copies.
    pub dale_pairs: Vec<(usize, usize)>,
    /// Per Dale pair, per step: `θ_exc − θ_inh`.
    pub dale_residual: Vec<Vec<f64>>,
}

/// Maps a trajectory of the final network of `records` back to the `2n`
/// event channels of the original model. Copies are averaged.
pub fn readback(traj: &Trajectory, n_units: usize, records: &[TransformRecord]) -> Result<Readback> {
    let origins = chain_origins(n_units, records)?;
    if origins.len() != traj.channels() {
        return Err(Error::Mismatch(format!(
            "trajectory has {} channels, record chain produces {}",
            traj.channels(),
            origins.len()
        )));
    }
    let m = 2 * n_units;
    let mut copies = vec![Vec::new(); m];
    for (k, &c) in origins.iter().enumerate() {
        copies[c].push(k);
    }
    if let Some(c) = copies.iter().position(Vec::is_empty) {
        return Err(Error::Mismatch(format!("channel {c} has no image in the final network")));
    }
    let avg = |row: &[f64], out: &mut Vec<f64>| {
        for group in &copies {
            out.push(group.iter().map(|&k| row[k]).sum::<f64>() / group.len() as f64);
        }
    };
    let steps = traj.steps();
    let mut theta = Vec::with_capacity(steps * m);
    let mut phi = Vec::with_capacity(steps * m);
    let mut x = Vec::with_capacity(steps * m);
    for t in 1..=steps {
        avg(traj.theta_at(t), &mut theta);
        avg(traj.at(crate::inference::Field::Phi, t), &mut phi);
        avg(traj.at(crate::inference::Field::X, t), &mut x);
    }
    let mut initial = Vec::with_capacity(m);
    avg(traj.initial_theta(), &mut initial);
    let labels = (0..m)
        .map(|c| ChannelLabel {
            unit: c / 2,
            slot: if c % 2 == 0 { Slot::A } else { Slot::B },
        })
        .collect();
    let clamped = copies.iter().map(|g| g.iter().any(|&k| traj.clamped()[k])).collect();
    let trajectory = Trajectory::from_parts(labels, clamped, initial, theta, phi, x)?;

    let event_residual = (0..n_units)
        .map(|i| {
            (1..=steps)
                .map(|t| {
                    let th = trajectory.theta_at(t);
                    th[channel(i, State::A)] + th[channel(i, State::B)] - 1.0
                })
                .collect()
        })
        .collect();

    let mut dale_pairs = Vec::new();
    if let Some(rec) = records.iter().rev().find(|r| r.kind == TransformKind::DaleSplit) {
        // Dale splits are the last index-changing rewrite in any legal chain.
        for news in &rec.forward {
            if let [exc, inh] = news[..] {
                dale_pairs.push((exc, inh));
            }
        }
    }
    let dale_residual = dale_pairs
        .iter()
        .map(|&(p, q)| (1..=steps).map(|t| traj.theta_at(t)[p] - traj.theta_at(t)[q]).collect())
        .collect();

    Ok(Readback {
        trajectory,
        event_residual,
        dale_pairs,
        dale_residual,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::model::BoltzmannMachine;

    fn chain3() -> PairwiseParams {
        let mut bm = BoltzmannMachine::new(3);
        bm.set_coupling(0, State::A, 1, State::B, 1.5);
        bm.set_coupling(1, State::A, 2, State::A, -0.7);
        bm.set_bias(0, State::A, 0.4);
        bm.set_bias(2, State::B, -1.1);
        bm.derive_pairwise().unwrap()
    }

    #[test]
    fn shift_zero_and_inverse() {
        let p = chain3();
        let same = shift(&p, 0, 1, State::A, State::B, 0.0).unwrap();
        for ((i, u, j, v), w) in same.weights() {
            assert_eq!(w, p.weight(i, u, j, v));
        }
        assert_eq!(same.bias(0, State::A), p.bias(0, State::A));
        let q = shift(&p, 0, 1, State::A, State::B, 0.37).unwrap();
        let r = shift(&q, 0, 1, State::A, State::B, -0.37).unwrap();
        for ((i, u, j, v), w) in r.weights() {
            assert!((w - p.weight(i, u, j, v)).abs() < 1e-15);
        }
        assert!((r.bias(0, State::A) - p.bias(0, State::A)).abs() < 1e-15);
        assert!(shift(&p, 0, 2, State::A, State::A, 1.0).is_err());
    }

    #[test]
    fn remove_bias_arithmetic() {
        let mut w = BTreeMap::new();
        for j in 1..4 {
            for v in State::ALL {
                w.insert((0, State::A, j, v), 1.0);
            }
        }
        let p = PairwiseParams::from_parts(4, w, vec![[3.0, 0.0], [0.0; 2], [0.0; 2], [0.0; 2]]).unwrap();
        let (q, rec) = remove_biases(&p).unwrap();
        assert_eq!(q.bias(0, State::A), 0.0);
        for j in 1..4 {
            for v in State::ALL {
                assert_eq!(q.weight(0, State::A, j, v), 0.0);
            }
        }
        assert!(rec.is_consistent());
    }

    #[test]
    fn isolated_bias_rejected() {
        let p = PairwiseParams::from_parts(1, BTreeMap::new(), vec![[1.0, -1.0]]).unwrap();
        assert!(matches!(remove_biases(&p), Err(Error::Precondition(_))));
    }

    #[test]
    fn event_split_shapes() {
        let p = PairwiseParams::from_parts(1, BTreeMap::new(), vec![[0.0; 2]]).unwrap();
        let (net, rec) = event_split(&p, &EventSplitOptions::default()).unwrap();
        assert_eq!(net.n(), 2);
        assert!(net.incoming(0).is_empty() && net.incoming(1).is_empty());
        assert!(rec.is_consistent());
        assert!(event_split(&chain3(), &EventSplitOptions::default()).is_err());
        let opts = EventSplitOptions {
            bias_to_input: true,
            ..Default::default()
        };
        let (net, _) = event_split(&chain3(), &opts).unwrap();
        assert_eq!(net.e()[0], -chain3().bias(0, State::A));
    }

    #[test]
    fn dale_split_segregates() {
        let net = LnpNetwork::new(
            vec![vec![0.0, 1.0, 0.0], vec![2.0, 0.0, 0.0], vec![-3.0, 0.0, 0.0]],
            vec![0.0; 3],
            1.0,
            1.0,
        )
        .unwrap();
        let (out, rec) = dale_split(&net).unwrap();
        assert_eq!(out.n(), 4);
        assert!(out.satisfies_dale());
        assert_eq!(rec.forward[0], vec![0, 1]);
        assert_eq!(out.row(0), out.row(1));
        let pos = LnpNetwork::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![0.0; 2], 1.0, 1.0).unwrap();
        assert_eq!(dale_split(&pos).unwrap().0.n(), 2);
    }

    #[test]
    fn network_file_roundtrip_and_sparse() {
        let net = LnpNetwork::new(vec![vec![0.0, 20.0], vec![15.0, 0.0]], vec![-15.0, -10.0], 0.5, 1.0).unwrap();
        assert_eq!(LnpNetwork::from_json(&net.to_json().unwrap()).unwrap(), net);
        let sparse = r#"{"n":2,"W":[{"i":0,"j":1,"value":20},{"i":1,"j":0,"value":15}],
                         "e":[-15,-10],"a":0.5,"eps_step":1}"#;
        assert_eq!(LnpNetwork::from_json(sparse).unwrap(), net);
        let bad = r#"{"n":2,"W":[[0,-1],[1,0]],"e":[0,0],"a":1,"eps_step":1,
                      "sign":["excitatory","excitatory"]}"#;
        assert!(matches!(LnpNetwork::from_json(bad), Err(Error::Invalid(_))));
    }

    #[test]
    fn illegal_chains() {
        let p = chain3();
        let o = EventSplitOptions::default();
        assert!(apply_chain(&p, &[TransformOp::DaleSplit], &o).is_err());
        assert!(matches!(apply_chain(&p, &[TransformOp::EventSplit], &o), Err(Error::Config(_))));
        let (t, recs) = apply_chain(
            &p,
            &[TransformOp::RemoveBias, TransformOp::EventSplit, TransformOp::DaleSplit],
            &o,
        )
        .unwrap();
        let Transformed::Network(net) = t else { panic!() };
        let origins = chain_origins(3, &recs).unwrap();
        assert_eq!(origins.len(), net.n());
    }
}
