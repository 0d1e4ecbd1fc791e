use crate::error::{Error, Result};
use crate::math::xlogx;
use crate::model::{channel, BoltzmannMachine, State};

/// `E_q[energy] − H(q)` for the fully factorized `q` whose unit `i` puts
/// mass `theta[2i+u]` on state `u`.
///
/// Equals `KL(q‖p) − ln Z`, so it is minimized where the KL divergence is.
pub fn free_energy(bm: &BoltzmannMachine, theta: &[f64]) -> Result<f64> {
    let n = bm.n();
    if theta.len() != 2 * n {
        return Err(Error::Mismatch(format!("theta has {} channels, model has {}", theta.len(), 2 * n)));
    }
    if let Some(c) = theta.iter().position(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::config(format!("theta[{c}] = {} outside [0,1]", theta[c])));
    }
    let mut pair = 0.0;
    for ((i, u, j, v), value) in bm.couplings() {
        pair += value * theta[channel(i, u)] * theta[channel(j, v)];
    }
    let mut field = 0.0;
    for ((i, u), value) in bm.biases() {
        field += value * theta[channel(i, u)];
    }
    let entropy: f64 = -(0..n)
        .flat_map(|i| State::ALL.map(|u| theta[channel(i, u)]))
        .map(xlogx)
        .sum::<f64>();
    Ok(-0.5 * pair + field - entropy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_entropy() {
        let bm = BoltzmannMachine::new(3);
        let f = free_energy(&bm, &[0.5; 6]).unwrap();
        assert!((f + 3.0 * 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn point_mass_is_energy() {
        let mut bm = BoltzmannMachine::new(2);
        bm.set_coupling(0, State::A, 1, State::B, 1.5);
        bm.set_bias(1, State::B, 0.25);
        let y = [State::A, State::B];
        let theta = [1.0, 0.0, 0.0, 1.0];
        assert_eq!(free_energy(&bm, &theta).unwrap(), bm.energy(&y).unwrap());
    }

    #[test]
    fn rejects_out_of_range() {
        let bm = BoltzmannMachine::new(1);
        assert!(free_energy(&bm, &[1.2, -0.2]).is_err());
        assert!(free_energy(&bm, &[0.5]).is_err());
    }
}
