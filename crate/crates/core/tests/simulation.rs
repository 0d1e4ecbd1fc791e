mod common;

use lnpbm::inference::Field;
use lnpbm::kernels::{continuous_alpha, discrete_alpha, exponential_normalized, KernelSpec};
use lnpbm::lnp_sim::{count_distribution, lecam_check, poisson_pmf, simulate, write_raster, LnpSimulator};
use lnpbm::stability::{
    classify, ensemble, excluded_region_check, field_export, find_fixed_points, fixed_point_residual,
    write_field_csv, EnsembleOptions, FixedPointOptions, Stability,
};
use lnpbm::{Error, LnpNetwork};

use common::{two_neuron, HIGH_POINT, LOW_POINT};

#[test]
fn two_neuron_network_has_two_stable_points_and_a_saddle() {
    let net = two_neuron(0.5);
    let report = find_fixed_points(&net, &FixedPointOptions::default());
    let classes: Vec<Stability> = report.points.iter().map(|p| p.classification).collect();
    assert_eq!(classes, vec![Stability::Stable, Stability::Unstable, Stability::Stable]);
    for p in &report.points {
        assert!(p.residual <= 1e-8);
        assert!(fixed_point_residual(&net, &p.y) <= 1e-8);
    }
    assert!((report.points[0].y[1] - LOW_POINT[1]).abs() < 5e-8);
    assert!((report.points[2].y[0] - HIGH_POINT[0]).abs() < 5e-4);
}

#[test]
fn classification_follows_spectral_radius() {
    let net = two_neuron(0.5);
    for p in find_fixed_points(&net, &FixedPointOptions::default()).points {
        let (class, rho) = classify(&net, &p.y).unwrap();
        assert_eq!(class, p.classification);
        assert_eq!(class == Stability::Stable, rho < 1.0);
    }
}

#[test]
fn ensemble_is_reproducible() {
    let net = two_neuron(0.5);
    let points = find_fixed_points(&net, &FixedPointOptions::default()).points;
    let opts = EnsembleOptions::new(50, 200, 4);
    let a = ensemble(&net, &points, &opts).unwrap();
    let b = ensemble(&net, &points, &opts).unwrap();
    assert_eq!(a.basin_counts(), b.basin_counts());
    assert_eq!(a.basin_counts().iter().sum::<usize>() + a.unresolved, 50);
}

#[test]
fn unit_step_traces_equal_spikes() {
    let net = two_neuron(1.0);
    let traj = simulate(&net, 500, 3, None).unwrap();
    for t in 1..=500 {
        assert_eq!(traj.at(Field::Theta, t), traj.at(Field::X, t));
    }
}

#[test]
fn traces_stay_in_unit_interval() {
    let net = LnpNetwork::new(vec![vec![0.0, -8.0, 3.0], vec![5.0, 0.0, -2.0], vec![1.0, 1.0, 0.0]], vec![0.5, -1.0, 0.0], 0.3, 1.0)
        .unwrap();
    let traj = simulate(&net, 2000, 9, Some(&[0.0, 1.0, 0.5])).unwrap();
    for t in 1..=2000 {
        for &y in traj.at(Field::Theta, t) {
            assert!((0.0..=1.0).contains(&y));
        }
    }
}

#[test]
fn kernel_mode_simulation_uses_attached_kernel() {
    let net = two_neuron(1.0).with_kernel(Some(KernelSpec::exponential(0.5, 5))).unwrap();
    let traj = simulate(&net, 300, 1, None).unwrap();
    let w = exponential_normalized(0.5, 5).unwrap();
    let x0 = traj.series(Field::X, 0);
    let y0 = traj.series(Field::Theta, 0);
    for t in 10..300 {
        let expect: f64 = (0..5).map(|k| w[k] * x0[t - k]).sum();
        assert!((y0[t] - expect).abs() < 1e-12);
    }
}

#[test]
fn deterministic_step_is_the_expected_update() {
    let net = two_neuron(0.5);
    let sim = LnpSimulator::new(&net);
    let y = [0.3, 0.6];
    let l = sim.rate(&y);
    let next = sim.deterministic_step(&y);
    for i in 0..2 {
        assert!((next[i] - (0.5 * y[i] + 0.5 * l[i])).abs() < 1e-15);
    }
}

#[test]
fn excluded_region_needs_strong_updates() {
    let traj = simulate(&two_neuron(0.5), 10, 0, None).unwrap();
    assert!(matches!(excluded_region_check(0.5, &traj), Err(Error::Precondition(_))));
    let traj = simulate(&two_neuron(0.8), 1000, 0, None).unwrap();
    assert!(excluded_region_check(0.8, &traj).unwrap().is_empty());
}

#[test]
fn field_grid_has_res_squared_rows() {
    let rows = field_export(&two_neuron(0.5), 100).unwrap();
    assert_eq!(rows.len(), 10_000);
    assert_eq!((rows[0].y1, rows[0].y2), (0.0, 0.0));
    assert_eq!((rows[1].y1, rows[1].y2), (0.0, 1.0 / 99.0));
    let mut out = Vec::new();
    write_field_csv(&rows, &mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap().lines().count(), 10_001);
    let wide = LnpNetwork::new(vec![vec![0.0; 3]; 3], vec![0.0; 3], 0.5, 1.0).unwrap();
    assert!(matches!(field_export(&wide, 10), Err(Error::Precondition(_))));
}

#[test]
fn raster_lists_every_neuron_every_step() {
    let traj = simulate(&two_neuron(0.5), 7, 0, None).unwrap();
    let mut out = Vec::new();
    write_raster(&traj, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,neuron,spike"));
    assert_eq!(lines.count(), 14);
}

#[test]
fn discrete_alpha_approaches_continuous_kernel() {
    for eps in [1e-2, 1e-3, 1e-4] {
        let w = discrete_alpha(2.0, eps, (1.0 / eps) as usize + 1).unwrap();
        let k = (0.5 / eps).round() as usize;
        let c = continuous_alpha(2.0, 0.5).unwrap();
        assert!((w[k] - c).abs() <= 2.0 * 2.0 * eps, "eps {eps}");
    }
}

#[test]
fn count_distributions_are_normalized() {
    let p = count_distribution(&[0.1, 0.5, 0.9, 0.3]);
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    // Four coin flips with distinct biases: P(0) = Π(1−p).
    assert!((p[0] - 0.9 * 0.5 * 0.1 * 0.7).abs() < 1e-15);
    let q = poisson_pmf(3.0, 60);
    assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((q[2] - 4.5 * (-3.0f64).exp()).abs() < 1e-15);
}

#[test]
fn lecam_single_step_matches_closed_form() {
    // One Bernoulli(p) against Poisson(p).
    let p: f64 = 0.3;
    let r = lecam_check(1.0, p, 1).unwrap();
    let tv = p * (1.0 - (-p).exp());
    assert!((r.tv - tv).abs() < 1e-12);
    assert!(r.within_bound());
    assert!(lecam_check(0.5, 0.1, 200_000).is_err());
}
