use serde::{Deserialize, Serialize};

use super::{Marginal, RewardModel};
use crate::error::{Error, Result};
use crate::simplex::ActionId;

/// Independent Gaussian belief per action pair; the one-hot special case of the
/// linear-Gaussian model.
///
/// `sigma_t(a,b) = sqrt(noise_var / (noise_var / prior_var + n_t(a,b)))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountsBelief {
    n_a: usize,
    n_b: usize,
    prior_mean: f64,
    prior_var: f64,
    noise_var: f64,
    counts: Vec<u64>,
    sums: Vec<f64>,
}

impl CountsBelief {
    pub fn new(n_a: usize, n_b: usize, prior_mean: f64, prior_var: f64, noise_var: f64) -> Result<Self> {
        if !(prior_var > 0.0 && noise_var > 0.0) {
            return Err(Error::Config(format!(
                "counts belief needs positive variances (prior {prior_var}, noise {noise_var})"
            )));
        }
        Ok(Self {
            n_a,
            n_b,
            prior_mean,
            prior_var,
            noise_var,
            counts: vec![0; n_a * n_b],
            sums: vec![0.0; n_a * n_b],
        })
    }

    pub fn n_opponent_actions(&self) -> usize {
        self.n_b
    }

    pub fn count(&self, a: ActionId, b: ActionId) -> u64 {
        self.counts[a.0 * self.n_b + b.0]
    }

    pub fn observe(&mut self, a: ActionId, b: ActionId, reward: f64) -> Result<()> {
        if !reward.is_finite() {
            return Err(Error::NonFinite("reward"));
        }
        let a = ActionId::checked(a.0, self.n_a)?;
        let b = ActionId::checked(b.0, self.n_b)?;
        let i = a.0 * self.n_b + b.0;
        self.counts[i] += 1;
        self.sums[i] += reward;
        Ok(())
    }

    pub fn marginal(&self, a: ActionId, b: ActionId) -> Marginal {
        let i = a.0 * self.n_b + b.0;
        let precision = 1.0 / self.prior_var + self.counts[i] as f64 / self.noise_var;
        let mean = (self.prior_mean / self.prior_var + self.sums[i] / self.noise_var) / precision;
        Marginal::new(mean, (1.0 / precision).sqrt())
    }
}

impl RewardModel for CountsBelief {
    type Context = ActionId;

    fn n_actions(&self) -> usize {
        self.n_a
    }

    fn noise_var(&self) -> f64 {
        self.noise_var
    }

    fn update(&mut self, a: ActionId, b: &ActionId, reward: f64) -> Result<()> {
        self.observe(a, *b, reward)
    }

    fn predict(&self, a: ActionId, b: &ActionId) -> Result<Marginal> {
        Ok(self.marginal(a, *b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_observation() {
        let mut c = CountsBelief::new(2, 2, 0.0, 1.0, 1.0).unwrap();
        c.observe(ActionId(0), ActionId(1), 1.0).unwrap();
        let m = c.marginal(ActionId(0), ActionId(1));
        assert!((m.mean - 0.5).abs() < 1e-15);
        assert!((m.variance() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn three_observations_same_pair() {
        let mut c = CountsBelief::new(2, 2, 0.0, 1.0, 1.0).unwrap();
        for _ in 0..3 {
            c.observe(ActionId(1), ActionId(1), 0.3).unwrap();
        }
        assert!((c.marginal(ActionId(1), ActionId(1)).std - 0.5).abs() < 1e-15);
    }

    #[test]
    fn untouched_pairs_keep_prior() {
        let mut c = CountsBelief::new(2, 2, 0.25, 2.0, 1.0).unwrap();
        c.observe(ActionId(1), ActionId(1), 0.3).unwrap();
        let m = c.marginal(ActionId(0), ActionId(1));
        assert_eq!(m.mean, 0.25);
        assert!((m.variance() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        let mut c = CountsBelief::new(2, 2, 0.0, 1.0, 1.0).unwrap();
        assert!(c.observe(ActionId(2), ActionId(0), 0.0).is_err());
        assert!(c.observe(ActionId(0), ActionId(0), f64::NAN).is_err());
        assert!(CountsBelief::new(2, 2, 0.0, 0.0, 1.0).is_err());
    }
}
