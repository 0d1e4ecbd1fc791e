use std::io::Write;

use super::net::{ChannelLabel, ChannelNet};
use crate::error::{Error, Result};

/// Which per-step record to read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Theta,
    Phi,
    X,
}

/// Per-step θ, φ and x for every channel, stored step-major.
///
/// Step `t` runs from 1 to `steps()`; the state before the first step is
/// available through [`Trajectory::initial_theta`].
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    labels: Vec<ChannelLabel>,
    clamped: Vec<bool>,
    initial_theta: Vec<f64>,
    theta: Vec<f64>,
    phi: Vec<f64>,
    x: Vec<f64>,
    steps: usize,
}

impl Trajectory {
    pub(crate) fn empty(net: &ChannelNet, initial_theta: Vec<f64>, capacity: usize) -> Self {
        let m = net.channels();
        Self {
            labels: net.labels().to_vec(),
            clamped: net.clamp().iter().map(Option::is_some).collect(),
            initial_theta,
            theta: Vec::with_capacity(capacity * m),
            phi: Vec::with_capacity(capacity * m),
            x: Vec::with_capacity(capacity * m),
            steps: 0,
        }
    }

    pub(crate) fn from_parts(
        labels: Vec<ChannelLabel>,
        clamped: Vec<bool>,
        initial_theta: Vec<f64>,
        theta: Vec<f64>,
        phi: Vec<f64>,
        x: Vec<f64>,
    ) -> Result<Self> {
        let m = labels.len();
        if clamped.len() != m || initial_theta.len() != m {
            return Err(Error::Mismatch("trajectory parts disagree on channel count".into()));
        }
        if m == 0 || !theta.len().is_multiple_of(m) || phi.len() != theta.len() || x.len() != theta.len() {
            return Err(Error::Mismatch("trajectory series lengths are inconsistent".into()));
        }
        let steps = theta.len() / m;
        Ok(Self {
            labels,
            clamped,
            initial_theta,
            theta,
            phi,
            x,
            steps,
        })
    }

    pub(crate) fn push_step(&mut self, theta: &[f64], phi: &[f64], x: &[f64]) {
        self.theta.extend_from_slice(theta);
        self.phi.extend_from_slice(phi);
        self.x.extend_from_slice(x);
        self.steps += 1;
    }

    pub fn channels(&self) -> usize {
        self.labels.len()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn labels(&self) -> &[ChannelLabel] {
        &self.labels
    }

    pub fn clamped(&self) -> &[bool] {
        &self.clamped
    }

    pub fn initial_theta(&self) -> &[f64] {
        &self.initial_theta
    }

    fn data(&self, field: Field) -> &[f64] {
        match field {
            Field::Theta => &self.theta,
            Field::Phi => &self.phi,
            Field::X => &self.x,
        }
    }

    /// All channels of one record at step `t` (1-based).
    pub fn at(&self, field: Field, t: usize) -> &[f64] {
        assert!(t >= 1 && t <= self.steps, "step {t} outside 1..={}", self.steps);
        let m = self.channels();
        &self.data(field)[(t - 1) * m..t * m]
    }

    pub fn theta_at(&self, t: usize) -> &[f64] {
        self.at(Field::Theta, t)
    }

    pub fn final_theta(&self) -> &[f64] {
        if self.steps == 0 {
            &self.initial_theta
        } else {
            self.theta_at(self.steps)
        }
    }

    /// Time series of one channel, steps 1..=steps.
    pub fn series(&self, field: Field, c: usize) -> Vec<f64> {
        let m = self.channels();
        self.data(field).iter().skip(c).step_by(m).copied().collect()
    }

    /// Writes `t,unit,channel,theta,phi,x`; NaN cells are left empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,unit,channel,theta,phi,x")?;
        let m = self.channels();
        for t in 0..self.steps {
            for c in 0..m {
                let k = t * m + c;
                let l = self.labels[c];
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    t + 1,
                    l.unit,
                    l.slot.symbol(),
                    cell(self.theta[k]),
                    cell(self.phi[k]),
                    cell(self.x[k])
                )?;
            }
        }
        Ok(())
    }
}

pub(crate) fn cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

/// Trailing mean over `window` samples; the first `window − 1` entries
/// average the samples available so far.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::config("moving-average window must be at least 1"));
    }
    Ok((0..series.len())
        .map(|t| {
            let w = &series[(t + 1).saturating_sub(window)..=t];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_examples() {
        assert_eq!(moving_average(&[2.0; 5], 3).unwrap(), vec![2.0; 5]);
        let s = [0.3, 0.1, 0.7];
        assert_eq!(moving_average(&s, 1).unwrap(), s.to_vec());
        let alt = [0.0, 1.0, 0.0, 1.0, 0.0];
        assert_eq!(moving_average(&alt, 2).unwrap(), vec![0.0, 0.5, 0.5, 0.5, 0.5]);
        assert!(moving_average(&s, 0).is_err());
    }
}
