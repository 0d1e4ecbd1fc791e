#![allow(dead_code)]

use lnpbm::model::{BoltzmannMachine, Observation, State};
use lnpbm::LnpNetwork;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fully connected symmetric model with couplings uniform in
/// `[-v_scale, v_scale]` and biases uniform in `[-c_scale, c_scale]`.
pub fn random_model(r: &mut ChaCha8Rng, n: usize, v_scale: f64, c_scale: f64) -> BoltzmannMachine {
    let mut bm = BoltzmannMachine::new(n);
    for i in 0..n {
        for j in i + 1..n {
            for u in State::ALL {
                for v in State::ALL {
                    bm.set_coupling(i, u, j, v, r.random_range(-v_scale..=v_scale));
                }
            }
        }
        for u in State::ALL {
            bm.set_bias(i, u, r.random_range(-c_scale..=c_scale));
        }
    }
    bm
}

/// Marks the first `k` units visible and observes them at random.
pub fn observe_first(r: &mut ChaCha8Rng, bm: &mut BoltzmannMachine, k: usize) -> Observation {
    bm.set_visible(0..k);
    (0..k)
        .map(|i| (i, if r.random_bool(0.5) { State::B } else { State::A }))
        .collect()
}

/// The two-neuron network with one high and one low stable point.
pub fn two_neuron(a: f64) -> LnpNetwork {
    LnpNetwork::new(vec![vec![0.0, 20.0], vec![15.0, 0.0]], vec![-15.0, -10.0], a, 1.0).unwrap()
}

pub const HIGH_POINT: [f64; 2] = [0.9922, 0.9925];
pub const LOW_POINT: [f64; 2] = [0.0031e-4, 0.4540e-4];
