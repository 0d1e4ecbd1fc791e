use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{channel, Observation, PairwiseParams, State};
use crate::transforms::LnpNetwork;

/// Role of a channel inside its update unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slot {
    A,
    B,
    /// A neuron of a split network: one channel, its own Bernoulli draw.
    #[serde(rename = "N")]
    Neuron,
}

impl Slot {
    pub fn symbol(self) -> &'static str {
        match self {
            Slot::A => "A",
            Slot::B => "B",
            Slot::Neuron => "N",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelLabel {
    pub unit: usize,
    pub slot: Slot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnitKind {
    /// Two complementary event channels sampled with one categorical draw.
    Paired,
    /// Channels sampled independently, one draw each.
    Independent,
}

/// The set of channels a sequential schedule touches in one step.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateUnit {
    pub kind: UnitKind,
    pub channels: Vec<usize>,
}

/// Channel-level view shared by all engines: each channel `c` has proposal
/// `σ(Σ_d W[c,d]·θ_d + input_c)`.
///
/// Built from pairwise parameters (`input = −b`, units paired by variable)
/// or from an LNP network (`input = e`, one independent unit per neuron,
/// or grouped by origin variable).
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelNet {
    rows: Vec<Vec<(usize, f64)>>,
    input: Vec<f64>,
    units: Vec<UpdateUnit>,
    labels: Vec<ChannelLabel>,
    clamp: Vec<Option<f64>>,
}

impl ChannelNet {
    pub fn from_pairwise(params: &PairwiseParams) -> Self {
        let n = params.n();
        let mut rows = vec![Vec::new(); 2 * n];
        for ((i, u, j, v), w) in params.weights() {
            if w != 0.0 {
                rows[channel(i, u)].push((channel(j, v), w));
            }
        }
        for row in &mut rows {
            row.sort_by_key(|&(d, _)| d);
        }
        let mut input = Vec::with_capacity(2 * n);
        let mut labels = Vec::with_capacity(2 * n);
        for i in 0..n {
            for u in State::ALL {
                input.push(-params.bias(i, u));
                labels.push(ChannelLabel {
                    unit: i,
                    slot: if u == State::A { Slot::A } else { Slot::B },
                });
            }
        }
        let units = (0..n)
            .map(|i| UpdateUnit {
                kind: UnitKind::Paired,
                channels: vec![channel(i, State::A), channel(i, State::B)],
            })
            .collect();
        Self {
            rows,
            input,
            units,
            labels,
            clamp: vec![None; 2 * n],
        }
    }

    /// Pairwise parameters with visible units clamped to their observation.
    pub fn from_pairwise_observed(params: &PairwiseParams, obs: &Observation) -> Result<Self> {
        let net = Self::from_pairwise(params);
        let clamp = observation_clamp(params.n(), obs)?;
        net.with_clamp(clamp)
    }

    /// One independent unit per neuron.
    pub fn from_lnp(net: &LnpNetwork) -> Self {
        let groups = (0..net.n()).map(|k| vec![k]).collect::<Vec<_>>();
        Self::from_lnp_grouped(net, &groups).expect("singleton groups always partition")
    }

    /// Neurons grouped into update units, e.g. all neurons derived from one
    /// original variable. Groups must partition `0..n`.
    pub fn from_lnp_grouped(net: &LnpNetwork, groups: &[Vec<usize>]) -> Result<Self> {
        let n = net.n();
        let mut owner = vec![usize::MAX; n];
        for (g, members) in groups.iter().enumerate() {
            for &k in members {
                if k >= n || owner[k] != usize::MAX {
                    return Err(Error::config(format!("groups do not partition 0..{n} (neuron {k})")));
                }
                owner[k] = g;
            }
        }
        if let Some(k) = owner.iter().position(|&g| g == usize::MAX) {
            return Err(Error::config(format!("neuron {k} is not in any group")));
        }
        let rows = (0..n).map(|k| net.incoming(k)).collect();
        let labels = (0..n)
            .map(|k| ChannelLabel {
                unit: k,
                slot: Slot::Neuron,
            })
            .collect();
        let units = groups
            .iter()
            .map(|members| {
                let mut channels = members.clone();
                channels.sort_unstable();
                UpdateUnit {
                    kind: UnitKind::Independent,
                    channels,
                }
            })
            .collect();
        Ok(Self {
            rows,
            input: net.e().to_vec(),
            units,
            labels,
            clamp: vec![None; n],
        })
    }

    /// Clamps channels to fixed values in `[0, 1]`. A unit must be clamped
    /// entirely or not at all.
    pub fn with_clamp(mut self, clamp: Vec<Option<f64>>) -> Result<Self> {
        if clamp.len() != self.rows.len() {
            return Err(Error::Mismatch(format!(
                "clamp covers {} channels, net has {}",
                clamp.len(),
                self.rows.len()
            )));
        }
        for (c, v) in clamp.iter().enumerate() {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(v) {
                    return Err(Error::config(format!("clamp value {v} on channel {c} outside [0,1]")));
                }
            }
        }
        for (k, unit) in self.units.iter().enumerate() {
            let n_clamped = unit.channels.iter().filter(|&&c| clamp[c].is_some()).count();
            if n_clamped != 0 && n_clamped != unit.channels.len() {
                return Err(Error::config(format!("unit {k} is partially clamped")));
            }
        }
        self.clamp = clamp;
        Ok(self)
    }

    pub fn channels(&self) -> usize {
        self.rows.len()
    }

    pub fn units(&self) -> &[UpdateUnit] {
        &self.units
    }

    pub fn labels(&self) -> &[ChannelLabel] {
        &self.labels
    }

    pub fn clamp(&self) -> &[Option<f64>] {
        &self.clamp
    }

    pub fn row(&self, c: usize) -> &[(usize, f64)] {
        &self.rows[c]
    }

    pub fn input(&self, c: usize) -> f64 {
        self.input[c]
    }

    /// Indices of units whose channels are not clamped.
    pub fn hidden_units(&self) -> Vec<usize> {
        (0..self.units.len())
            .filter(|&k| self.clamp[self.units[k].channels[0]].is_none())
            .collect()
    }

    /// Draw slot of the Bernoulli draw that decides `channel` (paired units
    /// share one draw, keyed by the unit index).
    pub(crate) fn draw_slot(&self, unit: usize, channel: usize) -> u64 {
        match self.units[unit].kind {
            UnitKind::Paired => unit as u64 + 1,
            UnitKind::Independent => channel as u64 + 1,
        }
    }

    /// `σ(Σ_d W[c,d]·θ_d + input_c)`.
    #[inline]
    pub fn proposal(&self, c: usize, theta: &[f64]) -> f64 {
        crate::math::logistic(crate::math::drive(&self.rows[c], theta, self.input[c]))
    }

    /// `max_c |θ_c − σ(·)|` over unclamped channels.
    pub fn fixed_point_residual(&self, theta: &[f64]) -> f64 {
        (0..self.channels())
            .filter(|&c| self.clamp[c].is_none())
            .map(|c| (theta[c] - self.proposal(c, theta)).abs())
            .fold(0.0, f64::max)
    }

    /// Short digest of weights, inputs, unit structure, and clamps.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.rows.len() as u64).to_le_bytes());
        for (c, row) in self.rows.iter().enumerate() {
            h.update((row.len() as u64).to_le_bytes());
            for &(d, w) in row {
                h.update((d as u64).to_le_bytes());
                h.update(w.to_bits().to_le_bytes());
            }
            h.update(self.input[c].to_bits().to_le_bytes());
            h.update(self.clamp[c].map_or(u64::MAX, f64::to_bits).to_le_bytes());
        }
        for unit in &self.units {
            h.update([matches!(unit.kind, UnitKind::Paired) as u8]);
            for &c in &unit.channels {
                h.update((c as u64).to_le_bytes());
            }
        }
        hex(&h.finalize()[..8])
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    use std::fmt::Write;
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Channel clamps for an observation on an `n`-unit model.
pub fn observation_clamp(n: usize, obs: &Observation) -> Result<Vec<Option<f64>>> {
    let mut clamp = vec![None; 2 * n];
    for (&i, &s) in obs {
        if i >= n {
            return Err(Error::config(format!("observed unit {i} out of range 0..{n}")));
        }
        clamp[channel(i, s)] = Some(1.0);
        clamp[channel(i, s.other())] = Some(0.0);
    }
    Ok(clamp)
}
