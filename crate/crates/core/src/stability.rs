//! Fixed points of the expected trace dynamics and stochastic stability of
//! the spiking dynamics around them.
//!
//! The deterministic map is `y ↦ (1 − aε)·y + aε·σ(W·y + e)`; its fixed
//! points solve `y = σ(W·y + e)` and are classified by the spectral radius
//! of its Jacobian.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::Trajectory;
use crate::lnp_sim::LnpSimulator;
use crate::math::{max_abs_diff, quantile};
use crate::rng::{CounterRng, Domain};
use crate::transforms::LnpNetwork;

/// Residual a reported fixed point must meet by direct substitution.
pub const FIXED_POINT_RESIDUAL: f64 = 1e-8;

/// `(1 − aε)·y + aε·σ(W·y + e)`.
pub fn deterministic_step(net: &LnpNetwork, y: &[f64]) -> Vec<f64> {
    LnpSimulator::new(net).deterministic_step(y)
}

/// `‖y − σ(W·y + e)‖∞`.
pub fn fixed_point_residual(net: &LnpNetwork, y: &[f64]) -> f64 {
    residual_with(&LnpSimulator::new(net), y)
}

fn residual_with(sim: &LnpSimulator, y: &[f64]) -> f64 {
    max_abs_diff(y, &sim.rate(y))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FixedPoint {
    pub y: Vec<f64>,
    pub residual: f64,
    pub classification: Stability,
    pub spectral_radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FixedPointReport {
    pub points: Vec<FixedPoint>,
    pub seeds_used: usize,
    pub diagnostics: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedPointOptions {
    /// Grid points per dimension (grid mode, `n ≤ 6`).
    pub grid_density: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub dedup_radius: f64,
    /// Random starts when the network is too wide for a grid.
    pub random_starts: usize,
    pub seed: u64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            grid_density: 11,
            tol: 1e-10,
            max_iters: 100_000,
            dedup_radius: 1e-4,
            random_starts: 1000,
            seed: 0,
        }
    }
}

/// Widest network searched on a grid.
const MAX_GRID_DIM: usize = 6;
/// Upper bound on grid starts; the density is lowered to respect it.
const MAX_GRID_STARTS: usize = 4096;

fn starts(n: usize, opts: &FixedPointOptions) -> Vec<Vec<f64>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    if n <= MAX_GRID_DIM {
        let mut d = opts.grid_density;
        while d > 2 && d.pow(n as u32) > MAX_GRID_STARTS {
            d -= 1;
        }
        let total = d.pow(n as u32);
        (0..total)
            .map(|mut k| {
                (0..n)
                    .map(|_| {
                        let c = k % d;
                        k /= d;
                        c as f64 / (d - 1) as f64
                    })
                    .collect()
            })
            .collect()
    } else {
        let rng = CounterRng::new(opts.seed);
        (0..opts.random_starts)
            .map(|s| {
                let mut st = rng.stream(Domain::Start, s as u64);
                (0..n).map(|i| st.uniform(i as u64)).collect()
            })
            .collect()
    }
}

/// Forward iteration of the deterministic map until successive iterates
/// differ by at most `tol`.
fn iterate(sim: &LnpSimulator, mut y: Vec<f64>, opts: &FixedPointOptions) -> Option<Vec<f64>> {
    for _ in 0..opts.max_iters {
        let next = sim.deterministic_step(&y);
        let d = max_abs_diff(&next, &y);
        y = next;
        if d <= opts.tol {
            return Some(y);
        }
    }
    None
}

/// `I − diag(σ'(W·y + e))·W`, the Jacobian of `y − σ(W·y + e)`.
fn residual_jacobian(net: &LnpNetwork, lambda: &[f64]) -> DMatrix<f64> {
    let n = net.n();
    DMatrix::from_fn(n, n, |i, j| {
        let d = lambda[i] * (1.0 - lambda[i]) * net.weight(i, j);
        if i == j {
            1.0 - d
        } else {
            -d
        }
    })
}

/// Damped Newton on `F(y) = y − σ(W·y + e)` with backtracking on `‖F‖∞`.
fn newton(net: &LnpNetwork, sim: &LnpSimulator, mut y: Vec<f64>, opts: &FixedPointOptions) -> Option<Vec<f64>> {
    let n = net.n();
    let f = |y: &[f64]| -> Vec<f64> { y.iter().zip(sim.rate(y)).map(|(a, b)| a - b).collect() };
    let norm = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut fy = f(&y);
    for _ in 0..200 {
        if norm(&fy) <= opts.tol {
            return Some(y);
        }
        let lambda = sim.rate(&y);
        let j = residual_jacobian(net, &lambda);
        let rhs = DMatrix::from_column_slice(n, 1, &fy);
        let step = j.lu().solve(&rhs)?;
        let mut alpha = 1.0;
        loop {
            let cand: Vec<f64> = (0..n).map(|i| y[i] - alpha * step[i]).collect();
            let fc = f(&cand);
            if norm(&fc) < norm(&fy) {
                y = cand;
                fy = fc;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-12 {
                return None;
            }
        }
    }
    (norm(&fy) <= opts.tol).then_some(y)
}

/// Spectral radius of `(1 − aε)·I + aε·diag(σ'(W·y + e))·W` at a verified
/// fixed point; below one is stable.
pub fn classify(net: &LnpNetwork, y: &[f64]) -> Result<(Stability, f64)> {
    let sim = LnpSimulator::new(net);
    if y.len() != net.n() {
        return Err(Error::Mismatch(format!("point has {} entries, network has {}", y.len(), net.n())));
    }
    let r = residual_with(&sim, y);
    if r.is_nan() || r > FIXED_POINT_RESIDUAL {
        return Err(Error::precondition(format!("not a fixed point: residual {r:e}")));
    }
    Ok(classify_unchecked(net, &sim, y))
}

fn classify_unchecked(net: &LnpNetwork, sim: &LnpSimulator, y: &[f64]) -> (Stability, f64) {
    let n = net.n();
    if n == 0 {
        return (Stability::Stable, 0.0);
    }
    let ae = net.a() * net.eps_step();
    let lambda = sim.rate(y);
    let j = DMatrix::from_fn(n, n, |i, k| {
        let d = ae * lambda[i] * (1.0 - lambda[i]) * net.weight(i, k);
        if i == k {
            1.0 - ae + d
        } else {
            d
        }
    });
    let radius = j.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let class = if radius < 1.0 { Stability::Stable } else { Stability::Unstable };
    (class, radius)
}

/// Multi-start search: forward iteration from every start (finds stable
/// points), then damped Newton from every start (finds the rest). Points
/// are verified by substitution, deduplicated, and sorted.
pub fn find_fixed_points(net: &LnpNetwork, opts: &FixedPointOptions) -> FixedPointReport {
    let sim = LnpSimulator::new(net);
    let starts = starts(net.n(), opts);
    let found: Vec<Option<Vec<f64>>> = starts
        .par_iter()
        .flat_map_iter(|s| {
            let fwd = iterate(&sim, s.clone(), opts).and_then(|y| newton(net, &sim, y.clone(), opts).or(Some(y)));
            let nwt = newton(net, &sim, s.clone(), opts);
            [fwd, nwt]
        })
        .collect();
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut diagnostics = Vec::new();
    let mut rejected = 0usize;
    for y in found.into_iter().flatten() {
        let r = residual_with(&sim, &y);
        if r.is_nan() || r > FIXED_POINT_RESIDUAL {
            rejected += 1;
            continue;
        }
        if points.iter().all(|p| max_abs_diff(p, &y) > opts.dedup_radius) {
            points.push(y);
        }
    }
    if rejected > 0 {
        diagnostics.push(format!("{rejected} candidate(s) failed the residual check"));
    }
    if points.is_empty() {
        diagnostics.push("no start converged".into());
    }
    points.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let points = points
        .into_iter()
        .map(|y| {
            let (classification, spectral_radius) = classify_unchecked(net, &sim, &y);
            FixedPoint {
                residual: residual_with(&sim, &y),
                y,
                classification,
                spectral_radius,
            }
        })
        .collect();
    FixedPointReport {
        points,
        seeds_used: starts.len(),
        diagnostics,
    }
}

// ---------------------------------------------------------------------------
// Ensembles

#[derive(Clone, Debug, PartialEq)]
pub enum EnsembleStart {
    /// Each trial starts uniform in `[0,1)^n`.
    UniformRandom,
    Fixed(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleOptions {
    pub trials: usize,
    pub steps: usize,
    pub seed: u64,
    pub start: EnsembleStart,
    /// ∞-norm radius for "near a fixed point".
    pub near_radius: f64,
    /// ∞-norm radius whose first exit defines the escape time.
    pub escape_radius: f64,
    pub terminal_window: usize,
}

impl EnsembleOptions {
    pub fn new(trials: usize, steps: usize, seed: u64) -> Self {
        Self {
            trials,
            steps,
            seed,
            start: EnsembleStart::UniformRandom,
            near_radius: 0.05,
            escape_radius: 0.25,
            terminal_window: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EscapeQuantiles {
    pub exited_fraction: f64,
    pub q10: Option<f64>,
    pub q50: Option<f64>,
    pub q90: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FixedPointStats {
    pub y: Vec<f64>,
    pub class: Stability,
    /// Trials whose terminal-window mean lies within the near radius.
    pub basin_count: usize,
    /// Fraction of terminal-window steps spent within the near radius.
    pub radius_occupancy: f64,
    /// Fraction of all steps spent within the near radius.
    pub overall_occupancy: f64,
    pub escape_quantiles: EscapeQuantiles,
    #[serde(skip)]
    pub first_entry: Vec<Option<usize>>,
    #[serde(skip)]
    pub escape_times: Vec<Option<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub trials: usize,
    pub steps: usize,
    pub seed: u64,
    pub fixed_points: Vec<FixedPointStats>,
    pub unresolved: usize,
}

impl EnsembleStats {
    pub fn basin_counts(&self) -> Vec<usize> {
        self.fixed_points.iter().map(|f| f.basin_count).collect()
    }
}

struct TrialOutcome {
    first_entry: Vec<Option<usize>>,
    first_exit: Vec<Option<usize>>,
    near_steps: Vec<usize>,
    terminal_near: Vec<usize>,
    terminal_mean: Vec<f64>,
}

fn run_trial(sim: &LnpSimulator, points: &[FixedPoint], opts: &EnsembleOptions, trial: usize) -> Result<TrialOutcome> {
    let n = sim.n();
    let master = CounterRng::new(opts.seed);
    let y0 = match &opts.start {
        EnsembleStart::Fixed(y) => y.clone(),
        EnsembleStart::UniformRandom => {
            let mut s = master.stream(Domain::Start, trial as u64);
            (0..n).map(|i| s.uniform(i as u64)).collect()
        }
    };
    let rng = CounterRng::new(master.derive_seed(Domain::Trial, trial as u64));
    let mut state = sim.init(&y0)?;
    let k = points.len();
    let window = opts.terminal_window.min(opts.steps);
    let mut out = TrialOutcome {
        first_entry: vec![None; k],
        first_exit: vec![None; k],
        near_steps: vec![0; k],
        terminal_near: vec![0; k],
        terminal_mean: vec![0.0; n],
    };
    let mut inside_escape: Vec<bool> = points
        .iter()
        .map(|p| max_abs_diff(&state.y, &p.y) <= opts.escape_radius)
        .collect();
    for t in 1..=opts.steps {
        sim.step(&mut state, &rng);
        let terminal = t > opts.steps - window;
        for (f, p) in points.iter().enumerate() {
            let d = max_abs_diff(&state.y, &p.y);
            if d <= opts.near_radius {
                out.near_steps[f] += 1;
                if terminal {
                    out.terminal_near[f] += 1;
                }
                out.first_entry[f].get_or_insert(t);
            }
            if d <= opts.escape_radius {
                inside_escape[f] = true;
            } else if inside_escape[f] && out.first_exit[f].is_none() {
                out.first_exit[f] = Some(t);
            }
        }
        if terminal {
            for (m, y) in out.terminal_mean.iter_mut().zip(&state.y) {
                *m += y;
            }
        }
    }
    for m in &mut out.terminal_mean {
        *m /= window as f64;
    }
    Ok(out)
}

/// Runs `trials` independent spiking trajectories and summarizes their
/// behavior around each of `points`. Trials run in parallel; results do
/// not depend on the worker count.
pub fn ensemble(net: &LnpNetwork, points: &[FixedPoint], opts: &EnsembleOptions) -> Result<EnsembleStats> {
    if opts.trials == 0 || opts.steps == 0 {
        return Err(Error::config("ensemble needs at least one trial and one step"));
    }
    if opts.terminal_window == 0 {
        return Err(Error::config("terminal window must be at least 1"));
    }
    if let EnsembleStart::Fixed(y) = &opts.start {
        if y.len() != net.n() {
            return Err(Error::Mismatch(format!("start has {} entries, network has {}", y.len(), net.n())));
        }
    }
    let sim = LnpSimulator::new(net);
    let outcomes: Vec<TrialOutcome> = (0..opts.trials)
        .into_par_iter()
        .map(|t| run_trial(&sim, points, opts, t))
        .collect::<Result<_>>()?;
    let window = opts.terminal_window.min(opts.steps);
    let mut unresolved = 0;
    let mut basin = vec![0usize; points.len()];
    for o in &outcomes {
        match points
            .iter()
            .position(|p| max_abs_diff(&o.terminal_mean, &p.y) <= opts.near_radius)
        {
            Some(f) => basin[f] += 1,
            None => unresolved += 1,
        }
    }
    let total = (opts.trials * opts.steps) as f64;
    let fixed_points = points
        .iter()
        .enumerate()
        .map(|(f, p)| {
            let escape_times: Vec<Option<usize>> = outcomes.iter().map(|o| o.first_exit[f]).collect();
            let exited: Vec<f64> = escape_times.iter().flatten().map(|&t| t as f64).collect();
            let q = |x: f64| (!exited.is_empty()).then(|| quantile(&exited, x));
            FixedPointStats {
                y: p.y.clone(),
                class: p.classification,
                basin_count: basin[f],
                radius_occupancy: outcomes.iter().map(|o| o.terminal_near[f]).sum::<usize>() as f64
                    / (opts.trials * window) as f64,
                overall_occupancy: outcomes.iter().map(|o| o.near_steps[f]).sum::<usize>() as f64 / total,
                escape_quantiles: EscapeQuantiles {
                    exited_fraction: exited.len() as f64 / opts.trials as f64,
                    q10: q(0.1),
                    q50: q(0.5),
                    q90: q(0.9),
                },
                first_entry: outcomes.iter().map(|o| o.first_entry[f]).collect(),
                escape_times,
            }
        })
        .collect();
    Ok(EnsembleStats {
        trials: opts.trials,
        steps: opts.steps,
        seed: opts.seed,
        fixed_points,
        unresolved,
    })
}

// ---------------------------------------------------------------------------
// Excluded region and field export

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionViolation {
    pub t: usize,
    pub neuron: usize,
    pub value: f64,
}

/// Trace values at `t ≥ 1` outside `[0, 1−a] ∪ [a, 1]`. Only meaningful for
/// `a > 0.5` with unit time step.
pub fn excluded_region_check(a: f64, traj: &Trajectory) -> Result<Vec<RegionViolation>> {
    if !(a > 0.5 && a <= 1.0) {
        return Err(Error::precondition(format!("excluded region needs 0.5 < a <= 1, got {a}")));
    }
    let lo = 1.0 - a;
    let mut out = Vec::new();
    for t in 1..=traj.steps() {
        for (i, &v) in traj.theta_at(t).iter().enumerate() {
            let ok = (0.0..=lo).contains(&v) || (a..=1.0).contains(&v);
            if !ok {
                out.push(RegionViolation { t, neuron: i, value: v });
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FieldRow {
    pub y1: f64,
    pub y2: f64,
    pub sqnorm: f64,
    pub v1: f64,
    pub v2: f64,
}

/// `‖y − λ(y)‖²` and `−(y − λ(y))` on a `res × res` grid over `[0,1]²`,
/// `y1` varying slowest.
pub fn field_export(net: &LnpNetwork, res: usize) -> Result<Vec<FieldRow>> {
    if net.n() != 2 {
        return Err(Error::precondition(format!("field export needs 2 neurons, network has {}", net.n())));
    }
    if res < 2 {
        return Err(Error::config("grid resolution must be at least 2"));
    }
    let sim = LnpSimulator::new(net);
    let h = (res - 1) as f64;
    let mut rows = Vec::with_capacity(res * res);
    for i in 0..res {
        for j in 0..res {
            let y = [i as f64 / h, j as f64 / h];
            let l = sim.rate(&y);
            let v1 = -(y[0] - l[0]);
            let v2 = -(y[1] - l[1]);
            rows.push(FieldRow {
                y1: y[0],
                y2: y[1],
                sqnorm: v1 * v1 + v2 * v2,
                v1,
                v2,
            });
        }
    }
    Ok(rows)
}

pub fn write_field_csv<W: Write>(rows: &[FieldRow], mut out: W) -> Result<()> {
    writeln!(out, "y1,y2,sqnorm,v1,v2")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.y1, r.y2, r.sqnorm, r.v1, r.v2)?;
    }
    Ok(())
}
