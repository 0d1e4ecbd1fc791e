//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use lnpbm::inference::{
    free_energy, run, Algorithm, ChannelNet, Engine, Field, Init, RunConfig, Schedule,
};
use lnpbm::kernels::{convolve_trace, discrete_alpha, recursive_trace, KernelSpec, SpikeHistory};
use lnpbm::lnp_sim::{lecam_check, simulate, LnpSimulator};
use lnpbm::math::{max_abs_diff, mean};
use lnpbm::model::{BoltzmannMachine, Observation, State};
use lnpbm::rng::{CounterRng, Domain};
use lnpbm::stability::{
    ensemble, excluded_region_check, find_fixed_points, EnsembleOptions, EnsembleStart, FixedPointOptions,
};
use lnpbm::trajectory_stats::{std_vs_mean, StdVsMean};
use lnpbm::transforms::{
    apply_chain, chain_origins, forward_values, origin_groups, readback, remove_biases, shift, EventSplitOptions,
    TransformOp, Transformed,
};
use lnpbm::{LnpNetwork, Trajectory};
use rand::Rng;

use common::{observe_first, random_model, rng, two_neuron, HIGH_POINT, LOW_POINT};

type Check = fn() -> (bool, String);

fn main() {
    let criteria: [(u8, &str, Check); 12] = [
        (1, "fixed-point reproduction", c1_fixed_points),
        (2, "basin dominance and escape", c2_basins),
        (3, "Gibbs matches exact posteriors", c3_gibbs_oracle),
        (4, "variational descent", c4_variational_descent),
        (5, "transform invariance", c5_transform_invariance),
        (6, "excluded region", c6_excluded_region),
        (7, "conditional expectation", c7_conditional_expectation),
        (8, "kernel convergence and trace equivalence", c8_kernels),
        (9, "LeCam bound", c9_lecam),
        (10, "SSI and LNP rasters agree", c10_raster_equivalence),
        (11, "SSI tracks variational", c11_ssi_tracks_variational),
        (12, "std-vs-mean shape", c12_std_vs_mean),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        let start = Instant::now();
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(r) => r,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        let secs = start.elapsed().as_secs_f64();
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {id:>2} [{name}]: {} ({detail}; {secs:.2}s)",
            if ok { "PASS" } else { "FAIL" }
        );
    }
    println!("acceptance: {} passed, {failed} failed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------

fn c1_fixed_points() -> (bool, String) {
    let net = two_neuron(0.5);
    let start = Instant::now();
    let report = find_fixed_points(&net, &FixedPointOptions::default());
    let elapsed = start.elapsed();
    let near = |target: &[f64; 2], tol: f64| {
        report
            .points
            .iter()
            .find(|p| p.y.iter().zip(target).all(|(a, b)| (a - b).abs() <= tol))
    };
    let high = near(&HIGH_POINT, 5e-4);
    let low = near(&LOW_POINT, 5e-8);
    let ok = high.is_some() && low.is_some() && elapsed < Duration::from_secs(1);
    (
        ok,
        format!(
            "high {:?}, low {:?}, {} point(s) total, search {:.3}s",
            high.map(|p| &p.y),
            low.map(|p| &p.y),
            report.points.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn c2_basins() -> (bool, String) {
    let net = two_neuron(0.5);
    let start = Instant::now();
    let points = find_fixed_points(&net, &FixedPointOptions::default()).points;
    let low = points
        .iter()
        .position(|p| max_abs_diff(&p.y, &LOW_POINT) < 1e-6)
        .expect("low point found");
    let high = points
        .iter()
        .position(|p| max_abs_diff(&p.y, &HIGH_POINT) < 1e-3)
        .expect("high point found");

    let opts = EnsembleOptions::new(1000, 2000, 2);
    let stats = ensemble(&net, &points, &opts).unwrap();
    let basin = stats.fixed_points[low].basin_count as f64 / 1000.0;

    let mut escape = EnsembleOptions::new(1000, 1000, 3);
    escape.start = EnsembleStart::Fixed(points[high].y.clone());
    let stats = ensemble(&net, &points, &escape).unwrap();
    let exited = stats.fixed_points[high]
        .escape_times
        .iter()
        .filter(|t| t.is_some_and(|t| t <= 1000))
        .count() as f64
        / 1000.0;
    let elapsed = start.elapsed();
    let ok = basin >= 0.95 && exited >= 0.99 && elapsed < Duration::from_secs(30);
    (
        ok,
        format!("{:.1}% settle at the low point, {:.1}% leave the high point", basin * 100.0, exited * 100.0),
    )
}

/// 20 models: n cycles through 2, 3, 4; every other model observes unit 0.
fn oracle_models() -> Vec<(BoltzmannMachine, Observation)> {
    let mut r = rng(303);
    (0..20)
        .map(|k| {
            let n = 2 + k % 3;
            let mut bm = random_model(&mut r, n, 1.0, 1.0);
            let obs = if k % 2 == 1 { observe_first(&mut r, &mut bm, 1) } else { Observation::new() };
            (bm, obs)
        })
        .collect()
}

fn c3_gibbs_oracle() -> (bool, String) {
    use rayon::prelude::*;
    let start = Instant::now();
    let models = oracle_models();
    let jobs: Vec<(usize, u64)> = (0..models.len()).flat_map(|m| [11, 22, 33].map(|s| (m, s))).collect();
    let worst: Vec<f64> = jobs
        .par_iter()
        .map(|&(m, seed)| {
            let (bm, obs) = &models[m];
            let exact = bm.exact_posterior_marginals(obs).unwrap();
            let net = ChannelNet::from_pairwise_observed(&bm.derive_pairwise().unwrap(), obs).unwrap();
            let cfg = RunConfig::new(Algorithm::Gibbs, Schedule::SequentialRandomScan, 1_000_000, seed);
            let mut engine = Engine::new(&net, cfg).unwrap();
            let burn_in = 1000;
            let mut count_a = vec![0u64; bm.n()];
            for t in 0..1_000_000 {
                engine.step();
                if t >= burn_in {
                    for (i, c) in count_a.iter_mut().enumerate() {
                        *c += engine.state().theta[2 * i] as u64;
                    }
                }
            }
            let total = (1_000_000 - burn_in) as f64;
            exact
                .iter()
                .map(|(&i, p)| (count_a[i] as f64 / total - p[0]).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let max_tv = worst.iter().copied().fold(0.0, f64::max);
    let elapsed = start.elapsed();
    let ok = max_tv <= 0.01 && elapsed < Duration::from_secs(120);
    (ok, format!("{} runs, worst per-unit TV {max_tv:.4}", jobs.len()))
}

fn c4_variational_descent() -> (bool, String) {
    let mut worst_rise = f64::NEG_INFINITY;
    let mut worst_residual = 0.0f64;
    for (k, (bm, obs)) in oracle_models().iter().enumerate() {
        let net = ChannelNet::from_pairwise_observed(&bm.derive_pairwise().unwrap(), obs).unwrap();
        let cfg = RunConfig::new(Algorithm::Variational, Schedule::SequentialCyclic, 4000, k as u64);
        let mut engine = Engine::new(&net, cfg).unwrap();
        let mut prev = free_energy(bm, &engine.state().theta).unwrap();
        for _ in 0..4000 {
            engine.step();
            let f = free_energy(bm, &engine.state().theta).unwrap();
            worst_rise = worst_rise.max(f - prev);
            prev = f;
        }
        worst_residual = worst_residual.max(net.fixed_point_residual(&engine.state().theta));
    }
    let ok = worst_rise <= 1e-10 && worst_residual <= 1e-8;
    (
        ok,
        format!("largest free-energy increase {worst_rise:.2e}, worst terminal residual {worst_residual:.2e}"),
    )
}

fn max_traj_diff(a: &Trajectory, b: &Trajectory) -> f64 {
    assert_eq!(a.steps(), b.steps());
    (1..=a.steps())
        .map(|t| max_abs_diff(a.theta_at(t), b.theta_at(t)))
        .fold(0.0, f64::max)
}

fn c5_transform_invariance() -> (bool, String) {
    let mut r = rng(505);
    let mut worst = [0.0f64; 4];
    let mut ssi_identical = true;
    let schedules = [Schedule::SequentialCyclic, Schedule::SequentialRandomScan, Schedule::ParallelSynchronized];
    for k in 0..6 {
        let n = 3 + k % 2;
        let mut bm = random_model(&mut r, n, 1.5, 1.0);
        let obs = if k % 2 == 0 { observe_first(&mut r, &mut bm, 1) } else { Observation::new() };
        let params = bm.derive_pairwise().unwrap();
        let base_net = ChannelNet::from_pairwise_observed(&params, &obs).unwrap();
        let clamp = base_net.clamp().to_vec();
        for (s, &schedule) in schedules.iter().enumerate() {
            let seed = 100 * k as u64 + s as u64;
            let var = RunConfig::new(Algorithm::Variational, schedule, 300, seed);
            let orig = run(&base_net, &var).unwrap();
            let init = Init::UserVector(orig.initial_theta().to_vec());

            // Shift on a random blanket edge.
            let i = r.random_range(0..n);
            let j = params.blanket(i)[r.random_range(0..params.blanket(i).len())];
            let c = r.random_range(-3.0..3.0);
            let shifted = shift(&params, i, j, State::A, State::B, c).unwrap();
            let net = ChannelNet::from_pairwise_observed(&shifted, &obs).unwrap();
            worst[0] = worst[0].max(max_traj_diff(&orig, &run(&net, &var.clone().with_init(init.clone())).unwrap()));

            let (nobias, _) = remove_biases(&params).unwrap();
            let net = ChannelNet::from_pairwise_observed(&nobias, &obs).unwrap();
            worst[1] = worst[1].max(max_traj_diff(&orig, &run(&net, &var.clone().with_init(init.clone())).unwrap()));

            let opts = EventSplitOptions::default();
            for (slot, ops) in [
                (2, vec![TransformOp::RemoveBias, TransformOp::EventSplit]),
                (3, vec![TransformOp::RemoveBias, TransformOp::EventSplit, TransformOp::DaleSplit]),
            ] {
                let (Transformed::Network(split), recs) = apply_chain(&params, &ops, &opts).unwrap() else {
                    unreachable!()
                };
                let origins = chain_origins(n, &recs).unwrap();
                let net = ChannelNet::from_lnp_grouped(&split, &origin_groups(n, &origins))
                    .unwrap()
                    .with_clamp(forward_values(&clamp, &origins))
                    .unwrap();
                let cfg = var
                    .clone()
                    .with_init(Init::UserVector(forward_values(orig.initial_theta(), &origins)));
                let rb = readback(&run(&net, &cfg).unwrap(), n, &recs).unwrap();
                worst[slot] = worst[slot].max(max_traj_diff(&orig, &rb.trajectory));
            }

            // SSI under bias removal: same draws, same samples.
            let ssi = RunConfig::new(Algorithm::Ssi, schedule, 300, seed);
            let a = run(&base_net, &ssi).unwrap();
            let b = run(&ChannelNet::from_pairwise_observed(&nobias, &obs).unwrap(), &ssi).unwrap();
            for t in 1..=a.steps() {
                let same_x = a
                    .at(Field::X, t)
                    .iter()
                    .zip(b.at(Field::X, t))
                    .all(|(p, q)| p.to_bits() == q.to_bits());
                ssi_identical &= same_x && a.theta_at(t) == b.theta_at(t);
            }
        }
    }
    let ok = worst.iter().all(|&w| w <= 1e-9) && ssi_identical;
    (
        ok,
        format!(
            "variational max diff: shift {:.1e}, remove-bias {:.1e}, event-split {:.1e}, dale-split {:.1e}; SSI bit-identical: {ssi_identical}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn c6_excluded_region() -> (bool, String) {
    let mut violations = 0;
    let mut runs = 0;
    let mut r = rng(606);
    for a in [0.6, 0.75, 0.9] {
        let w: Vec<Vec<f64>> = (0..5).map(|_| (0..5).map(|_| r.random_range(-5.0..5.0)).collect()).collect();
        let e: Vec<f64> = (0..5).map(|_| r.random_range(-2.0..2.0)).collect();
        let nets = [two_neuron(a), LnpNetwork::new(w, e, a, 1.0).unwrap()];
        for net in &nets {
            for seed in 0..10u64 {
                let y0: Vec<f64> = (0..net.n()).map(|_| r.random_range(0.0..1.0)).collect();
                let traj = simulate(net, 10_000, seed, Some(&y0)).unwrap();
                violations += excluded_region_check(a, &traj).unwrap().len();
                runs += 1;
            }
        }
    }
    (violations == 0, format!("{runs} runs of 10^4 steps, {violations} violation(s)"))
}

fn c7_conditional_expectation() -> (bool, String) {
    let net = two_neuron(0.5);
    let sim = LnpSimulator::new(&net);
    let a = net.a();
    let draws = 100_000u64;
    let mut states = rng(707);
    let master = CounterRng::new(7);
    let mut worst_z = 0.0f64;
    let mut outside = 0;
    for s in 0..100u64 {
        let y0 = [states.random_range(0.0..1.0), states.random_range(0.0..1.0)];
        let frozen = sim.init(&y0).unwrap();
        let lambda = sim.rate(&y0);
        let mc = CounterRng::new(master.derive_seed(Domain::MonteCarlo, s));
        let mut sum = [0.0; 2];
        for d in 0..draws {
            let mut st = frozen.clone();
            st.t = d;
            sim.step(&mut st, &mc);
            sum[0] += st.y[0];
            sum[1] += st.y[1];
        }
        for i in 0..2 {
            let expected = (1.0 - a) * y0[i] + a * lambda[i];
            let sigma = a * (lambda[i] * (1.0 - lambda[i]) / draws as f64).sqrt();
            let z = (sum[i] / draws as f64 - expected).abs() / sigma;
            worst_z = worst_z.max(z);
            if z > 3.0 {
                outside += 1;
            }
        }
    }
    (
        outside == 0,
        format!("{outside} of 200 coordinates beyond 3 sigma, largest |z| {worst_z:.2}"),
    )
}

fn c8_kernels() -> (bool, String) {
    let eps = 1e-4;
    let w = discrete_alpha(1.0, eps, 100_001).unwrap();
    let mut worst_kernel = 0.0f64;
    for step in 0..=1000 {
        let tau = step as f64 * 0.01;
        let k = (tau / eps).round() as usize;
        worst_kernel = worst_kernel.max((w[k] - (-tau).exp()).abs());
    }

    let mut r = rng(808);
    let mut worst_gap = 0.0f64;
    let mut ok_traces = true;
    for (a, horizon) in [(0.2, 30usize), (0.5, 20), (0.5, 200), (0.9, 10)] {
        let kernel = KernelSpec::alpha(a, 1.0, horizon).build().unwrap();
        let bound = (1.0 - a).powi(horizon as i32);
        let mut hist = SpikeHistory::new(horizon);
        let mut rec = 0.0;
        for _ in 0..1000 {
            let x = if r.random_bool(0.4) { 1.0 } else { 0.0 };
            rec = recursive_trace(rec, x, a, 1.0);
            hist.push(x);
            let gap = (rec - convolve_trace(&hist, &kernel)).abs();
            worst_gap = worst_gap.max(gap);
            ok_traces &= gap <= bound + 1e-12;
        }
    }
    let ok = worst_kernel <= 1e-3 && ok_traces;
    (
        ok,
        format!("kernel error {worst_kernel:.2e}, largest recursive/convolution gap {worst_gap:.2e}"),
    )
}

fn c9_lecam() -> (bool, String) {
    let mut worst_ratio = 0.0f64;
    let mut ok = true;
    let mut cases = 0;
    for lambda in [0.05, 0.2, 0.8] {
        for eps in [0.1, 0.01, 0.001] {
            for steps in [1, 10, 100, 1000] {
                let r = lecam_check(lambda, eps, steps).unwrap();
                ok &= r.within_bound();
                worst_ratio = worst_ratio.max(r.tv / r.bound);
                cases += 1;
            }
        }
    }
    (ok, format!("{cases} grid points, largest TV/bound {worst_ratio:.3}"))
}

fn c10_raster_equivalence() -> (bool, String) {
    let mut r = rng(1010);
    let mut identical = true;
    let mut spikes = 0.0;
    let mut runs = 0;
    for _ in 0..4 {
        let bm = random_model(&mut r, 6, 1.5, 1.0);
        let params = bm.derive_pairwise().unwrap();
        let opts = EventSplitOptions {
            kernel: Some(KernelSpec::default()),
            ..Default::default()
        };
        let ops = [TransformOp::RemoveBias, TransformOp::EventSplit, TransformOp::DaleSplit];
        let (Transformed::Network(net), _) = apply_chain(&params, &ops, &opts).unwrap() else {
            unreachable!()
        };
        for seed in [1u64, 2] {
            let cfg = RunConfig::new(Algorithm::Ssi, Schedule::ParallelSynchronized, 1000, seed);
            let chan = ChannelNet::from_lnp(&net);
            let ssi = run(&chan, &cfg).unwrap();
            let sim = simulate(&net, 1000, seed, Some(ssi.initial_theta())).unwrap();
            for t in 1..=1000 {
                identical &= ssi.at(Field::X, t) == sim.at(Field::X, t);
                identical &= ssi.theta_at(t) == sim.theta_at(t);
                spikes += ssi.at(Field::X, t).iter().sum::<f64>();
            }
            runs += 1;
        }
    }
    (identical, format!("{runs} runs, {spikes} spikes, rasters identical: {identical}"))
}

/// Six units, two observed, couplings small enough that `‖W‖∞ ≤ 2`.
fn weak_models() -> Vec<(BoltzmannMachine, Observation)> {
    let mut r = rng(1111);
    (0..3)
        .map(|_| {
            let mut bm = random_model(&mut r, 6, 0.1, 1.0);
            let obs = observe_first(&mut r, &mut bm, 2);
            (bm, obs)
        })
        .collect()
}

fn row_sum_norm(bm: &BoltzmannMachine) -> f64 {
    let p = bm.derive_pairwise().unwrap();
    let mut rows = vec![0.0; 2 * bm.n()];
    for ((i, u, _, _), w) in p.weights() {
        rows[2 * i + u.index()] += w.abs();
    }
    rows.into_iter().fold(0.0, f64::max)
}

fn weak_runs() -> Vec<(Trajectory, Trajectory)> {
    let mut out = Vec::new();
    for (k, (bm, obs)) in weak_models().iter().enumerate() {
        let net = ChannelNet::from_pairwise_observed(&bm.derive_pairwise().unwrap(), obs).unwrap();
        let var = run(&net, &RunConfig::new(Algorithm::Variational, Schedule::ParallelSynchronized, 500, 0)).unwrap();
        for seed in [1u64, 2, 3] {
            let cfg = RunConfig::new(Algorithm::Ssi, Schedule::ParallelSynchronized, 5000, 10 * k as u64 + seed);
            out.push((run(&net, &cfg).unwrap(), var.clone()));
        }
    }
    out
}

fn c11_ssi_tracks_variational() -> (bool, String) {
    let norm = weak_models().iter().map(|(bm, _)| row_sum_norm(bm)).fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for (ssi, var) in weak_runs() {
        let fixed = var.final_theta();
        let devs: Vec<f64> = (0..ssi.channels())
            .filter(|&c| !ssi.clamped()[c])
            .map(|c| {
                let s = ssi.series(Field::Theta, c);
                (mean(&s[s.len() - 2000..]) - fixed[c]).abs()
            })
            .collect();
        worst = worst.max(mean(&devs));
    }
    let ok = norm <= 2.0 && worst <= 0.05;
    (ok, format!("max ‖W‖∞ {norm:.2}, worst mean |deviation| {worst:.4}"))
}

fn c12_std_vs_mean() -> (bool, String) {
    let mut parts = Vec::new();
    for (ssi, _) in weak_runs() {
        parts.push(std_vs_mean(&ssi, 2000).unwrap());
    }
    let strong = simulate(&two_neuron(0.5), 5000, 12, None).unwrap();
    parts.push(std_vs_mean(&strong, 1000).unwrap());
    let mut r = rng(1212);
    for seed in 0..3u64 {
        let mut bm = random_model(&mut r, 6, 0.5, 0.0);
        for i in 0..6 {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            bm.set_bias(i, State::A, 4.0 * sign);
        }
        let net = ChannelNet::from_pairwise(&bm.derive_pairwise().unwrap());
        let cfg = RunConfig::new(Algorithm::Ssi, Schedule::ParallelSynchronized, 5000, seed);
        parts.push(std_vs_mean(&run(&net, &cfg).unwrap(), 2000).unwrap());
    }
    let combined = StdVsMean::combine(&parts);
    let ok = combined.extremes_quieter() == Some(true);
    (
        ok,
        format!(
            "extreme-bin std {:?}, center-bin std {:?}, {} channels",
            combined.extreme_bin_std,
            combined.center_bin_std,
            combined.pairs.len()
        ),
    )
}
