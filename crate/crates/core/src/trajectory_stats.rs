//! Post-processing of recorded trajectories: per-channel summaries,
//! SSI-versus-variational scatter data, the std-versus-mean relation, and
//! residual statistics of split networks.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::{moving_average, Field, Trajectory};
use crate::math::{mean, quantile, sample_std};
use crate::transforms::Readback;

pub const DEFAULT_MOVING_WINDOW: usize = 30;
pub const DEFAULT_TERMINAL_WINDOW: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChannelSummary {
    pub channel: usize,
    pub unit: usize,
    pub slot: &'static str,
    pub clamped: bool,
    pub mean: f64,
    pub std: f64,
    pub terminal_mean: f64,
    #[serde(skip)]
    pub moving_average: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectorySummary {
    pub steps: usize,
    pub window: usize,
    pub terminal_window: usize,
    pub channels: Vec<ChannelSummary>,
}

fn check_window(name: &str, w: usize, steps: usize) -> Result<()> {
    if w == 0 || w > steps {
        return Err(Error::config(format!("{name} {w} must lie in 1..={steps}")));
    }
    Ok(())
}

fn tail(series: &[f64], window: usize) -> &[f64] {
    &series[series.len() - window..]
}

/// Mean, std, moving average and terminal-window mean of one record
/// (usually θ) for every channel.
pub fn summarize(traj: &Trajectory, field: Field, window: usize, terminal_window: usize) -> Result<TrajectorySummary> {
    check_window("moving-average window", window, traj.steps())?;
    check_window("terminal window", terminal_window, traj.steps())?;
    let channels = (0..traj.channels())
        .map(|c| {
            let s = traj.series(field, c);
            let label = traj.labels()[c];
            Ok(ChannelSummary {
                channel: c,
                unit: label.unit,
                slot: label.slot.symbol(),
                clamped: traj.clamped()[c],
                mean: mean(&s),
                std: sample_std(&s),
                terminal_mean: mean(tail(&s, terminal_window)),
                moving_average: moving_average(&s, window)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(TrajectorySummary {
        steps: traj.steps(),
        window,
        terminal_window,
        channels,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScatterPoint {
    pub channel: usize,
    pub clamped: bool,
    pub ssi_mean: f64,
    pub var_converged: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scatter {
    pub points: Vec<ScatterPoint>,
    /// Over unclamped channels.
    pub max_abs_deviation: f64,
    pub mean_abs_deviation: f64,
}

/// Pairs the terminal-window θ mean of an SSI run with the final θ of a
/// variational run, channel by channel.
pub fn scatter_mean_vs_var(ssi: &Trajectory, var: &Trajectory, terminal_window: usize) -> Result<Scatter> {
    if ssi.labels() != var.labels() || ssi.clamped() != var.clamped() {
        return Err(Error::Mismatch("runs do not share channels and clamps".into()));
    }
    check_window("terminal window", terminal_window, ssi.steps())?;
    let last = var.final_theta();
    let points: Vec<ScatterPoint> = (0..ssi.channels())
        .map(|c| ScatterPoint {
            channel: c,
            clamped: ssi.clamped()[c],
            ssi_mean: mean(tail(&ssi.series(Field::Theta, c), terminal_window)),
            var_converged: last[c],
        })
        .collect();
    let devs: Vec<f64> = points
        .iter()
        .filter(|p| !p.clamped)
        .map(|p| (p.ssi_mean - p.var_converged).abs())
        .collect();
    Ok(Scatter {
        max_abs_deviation: devs.iter().copied().fold(0.0, f64::max),
        mean_abs_deviation: if devs.is_empty() { 0.0 } else { mean(&devs) },
        points,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanStd {
    pub channel: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StdVsMean {
    pub pairs: Vec<MeanStd>,
    /// Mean std of channels whose mean lies in `[0,0.1] ∪ [0.9,1]`.
    pub extreme_bin_std: Option<f64>,
    /// Mean std of channels whose mean lies in `[0.4,0.6]`.
    pub center_bin_std: Option<f64>,
}

impl StdVsMean {
    fn from_pairs(pairs: Vec<MeanStd>) -> Self {
        let bin = |pred: &dyn Fn(f64) -> bool| {
            let v: Vec<f64> = pairs.iter().filter(|p| pred(p.mean)).map(|p| p.std).collect();
            (!v.is_empty()).then(|| mean(&v))
        };
        Self {
            extreme_bin_std: bin(&|m| m <= 0.1 || m >= 0.9),
            center_bin_std: bin(&|m| (0.4..=0.6).contains(&m)),
            pairs,
        }
    }

    /// Pools several runs into one binned summary.
    pub fn combine(parts: &[StdVsMean]) -> Self {
        Self::from_pairs(parts.iter().flat_map(|p| p.pairs.iter().copied()).collect())
    }

    /// Whether the extreme bins have strictly smaller mean std than the
    /// center bin. `None` if either bin is empty.
    pub fn extremes_quieter(&self) -> Option<bool> {
        Some(self.extreme_bin_std? < self.center_bin_std?)
    }
}

/// `(mean, std)` of θ over the terminal window of every channel.
pub fn std_vs_mean(traj: &Trajectory, terminal_window: usize) -> Result<StdVsMean> {
    check_window("terminal window", terminal_window, traj.steps())?;
    let pairs = (0..traj.channels())
        .map(|c| {
            let s = traj.series(Field::Theta, c);
            let w = tail(&s, terminal_window);
            MeanStd {
                channel: c,
                mean: mean(w),
                std: sample_std(w),
            }
        })
        .collect();
    Ok(StdVsMean::from_pairs(pairs))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Quantiles {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl Quantiles {
    pub fn of(xs: &[f64]) -> Option<Self> {
        (!xs.is_empty()).then(|| Self {
            min: quantile(xs, 0.0),
            q25: quantile(xs, 0.25),
            median: quantile(xs, 0.5),
            q75: quantile(xs, 0.75),
            max: quantile(xs, 1.0),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitResiduals {
    /// Per unit: std over time of `θ_A + θ_B − 1`.
    pub event_std: Vec<f64>,
    /// Per Dale pair: std over time of `θ_exc − θ_inh`.
    pub dale_std: Vec<f64>,
    pub event_quantiles: Option<Quantiles>,
    pub dale_quantiles: Option<Quantiles>,
}

pub fn split_residuals(rb: &Readback) -> SplitResiduals {
    let event_std: Vec<f64> = rb.event_residual.iter().map(|s| sample_std(s)).collect();
    let dale_std: Vec<f64> = rb.dale_residual.iter().map(|s| sample_std(s)).collect();
    SplitResiduals {
        event_quantiles: Quantiles::of(&event_std),
        dale_quantiles: Quantiles::of(&dale_std),
        event_std,
        dale_std,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HistBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Equal-width histogram over `[min, max]` of `values`; the top edge is
/// inclusive.
pub fn histogram(values: &[f64], bins: usize) -> Result<Vec<HistBin>> {
    if bins == 0 {
        return Err(Error::config("histogram needs at least one bin"));
    }
    if values.is_empty() {
        return Ok(Vec::new());
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut out: Vec<HistBin> = (0..bins)
        .map(|b| HistBin {
            lo: lo + b as f64 * width,
            hi: lo + (b + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        out[b].count += 1;
    }
    Ok(out)
}

pub fn write_histogram_csv<W: Write>(bins: &[HistBin], mut out: W) -> Result<()> {
    writeln!(out, "bin_lo,bin_hi,count")?;
    for b in bins {
        writeln!(out, "{},{},{}", b.lo, b.hi, b.count)?;
    }
    Ok(())
}

/// Writes `channel,x,y` rows.
pub fn write_pairs_csv<W: Write>(pairs: &[(usize, f64, f64)], mut out: W) -> Result<()> {
    writeln!(out, "channel,x,y")?;
    for (c, x, y) in pairs {
        writeln!(out, "{c},{x},{y}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_counts() {
        let h = histogram(&[0.0, 0.1, 0.5, 1.0], 2).unwrap();
        assert_eq!(h.iter().map(|b| b.count).collect::<Vec<_>>(), vec![2, 2]);
        assert_eq!(histogram(&[3.0, 3.0], 4).unwrap()[0].count, 2);
    }

    #[test]
    fn bins_compare() {
        let s = StdVsMean::from_pairs(vec![
            MeanStd {
                channel: 0,
                mean: 0.05,
                std: 0.01,
            },
            MeanStd {
                channel: 1,
                mean: 0.5,
                std: 0.3,
            },
        ]);
        assert_eq!(s.extremes_quieter(), Some(true));
        let empty = StdVsMean::from_pairs(vec![]);
        assert_eq!(empty.extremes_quieter(), None);
    }
}
