//! Full-information no-regret rules: Hedge (exponential weights) and Regret
//! Matching.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Result};
use crate::simplex::{ActionId, Simplex};

/// Hedge learning-rate schedule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EtaSchedule {
    /// `eta_t = sqrt(ln|A| / (t + 1))`.
    #[default]
    Anytime,
    /// `eta = sqrt(8 ln|A| / T)` for a known horizon `T`.
    Horizon { rounds: usize },
    /// `eta_t = sqrt(ln|A| / (|A| (t + 1)))`, the anytime rate for
    /// importance-weighted (bandit) reward estimates.
    Bandit,
    Fixed { eta: f64 },
}

impl EtaSchedule {
    pub fn eta(&self, n_actions: usize, t: usize) -> f64 {
        let ln_a = (n_actions.max(2) as f64).ln();
        match *self {
            EtaSchedule::Anytime => (ln_a / (t as f64 + 1.0)).sqrt(),
            EtaSchedule::Horizon { rounds } => (8.0 * ln_a / rounds.max(1) as f64).sqrt(),
            EtaSchedule::Bandit => (ln_a / (n_actions.max(1) as f64 * (t as f64 + 1.0))).sqrt(),
            EtaSchedule::Fixed { eta } => eta,
        }
    }
}

/// Exponential weights kept in log space.
///
/// The log-weights are re-centred at their maximum after every update, so they
/// stay finite over arbitrarily long runs and `exp` never overflows.
#[derive(Clone, Debug, PartialEq)]
pub struct HedgeState {
    log_weights: Vec<f64>,
    schedule: EtaSchedule,
    strategy: Simplex,
}

impl HedgeState {
    pub fn new(n_actions: usize, schedule: EtaSchedule) -> Self {
        Self {
            log_weights: vec![0.0; n_actions],
            schedule,
            strategy: Simplex::uniform(n_actions),
        }
    }

    pub fn strategy(&self) -> &Simplex {
        &self.strategy
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn schedule(&self) -> EtaSchedule {
        self.schedule
    }

    /// `log_w[a] += eta_t * r(a)`, then softmax.
    pub fn update(&mut self, rewards: &[f64], t: usize) -> Result<()> {
        check_len(self.log_weights.len(), rewards.len())?;
        check_finite(rewards, "hedge rewards")?;
        let eta = self.schedule.eta(self.log_weights.len(), t);
        for (w, r) in self.log_weights.iter_mut().zip(rewards) {
            *w += eta * r;
        }
        let max = self
            .log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        for w in &mut self.log_weights {
            *w -= max;
        }
        let weights: Vec<f64> = self.log_weights.iter().map(|w| w.exp()).collect();
        self.strategy = Simplex::normalize(&weights)?;
        Ok(())
    }
}

pub fn hedge_update(state: &HedgeState, rewards: &[f64], t: usize) -> Result<HedgeState> {
    let mut next = state.clone();
    next.update(rewards, t)?;
    Ok(next)
}

/// Regret Matching over a cumulative regret vector `C_t`.
///
/// `C_t(a) = sum_{s <= t} reg_s(a)`, where each round's instantaneous regret
/// pairs that round's reward vector with that round's own play.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RMState {
    cumulative_regret: Vec<f64>,
}

impl RMState {
    pub fn new(n_actions: usize) -> Self {
        Self {
            cumulative_regret: vec![0.0; n_actions],
        }
    }

    pub fn from_cumulative(cumulative_regret: Vec<f64>) -> Result<Self> {
        check_finite(&cumulative_regret, "cumulative regret")?;
        Ok(Self { cumulative_regret })
    }

    pub fn cumulative_regret(&self) -> &[f64] {
        &self.cumulative_regret
    }

    /// `C_{t+1} = C_t + reg`.
    pub fn accumulate(&mut self, instant_regret: &[f64]) -> Result<()> {
        check_len(self.cumulative_regret.len(), instant_regret.len())?;
        check_finite(instant_regret, "instantaneous regret")?;
        for (c, r) in self.cumulative_regret.iter_mut().zip(instant_regret) {
            *c += r;
        }
        Ok(())
    }

    /// Positive part of `C`, normalized; uniform when nothing is positive.
    pub fn strategy(&self) -> Simplex {
        let positive: Vec<f64> = self.cumulative_regret.iter().map(|c| c.max(0.0)).collect();
        Simplex::normalize(&positive).expect("positive part is non-negative and finite")
    }

    /// `C^+`.
    pub fn positive_part(&self) -> Vec<f64> {
        self.cumulative_regret.iter().map(|c| c.max(0.0)).collect()
    }
}

pub fn rm_accumulate(state: &RMState, instant_regret: &[f64]) -> Result<RMState> {
    let mut next = state.clone();
    next.accumulate(instant_regret)?;
    Ok(next)
}

pub fn rm_strategy(state: &RMState) -> Simplex {
    state.strategy()
}

/// `r - <x, r> 1`: regret against the strategy actually sampled from.
pub fn expected_instant_regret(x: &Simplex, rewards: &[f64]) -> Vec<f64> {
    let baseline = x.expectation(rewards);
    rewards.iter().map(|r| r - baseline).collect()
}

/// `r - r(A_t) 1`: regret against the realized action.
pub fn realized_instant_regret(played: ActionId, rewards: &[f64]) -> Vec<f64> {
    let baseline = rewards[played.0];
    rewards.iter().map(|r| r - baseline).collect()
}

/// `max_a sum_t r_t(a) - r_t(A_t)` over a sequence of reward vectors and the
/// actions played against them. Zero for an empty sequence.
pub fn full_info_regret<'a, I>(rounds: I) -> f64
where
    I: IntoIterator<Item = (&'a [f64], ActionId)>,
{
    let mut totals: Vec<f64> = Vec::new();
    let mut realized = 0.0;
    for (r, a) in rounds {
        if totals.is_empty() {
            totals = vec![0.0; r.len()];
        }
        for (tot, v) in totals.iter_mut().zip(r) {
            *tot += v;
        }
        realized += r[a.0];
    }
    totals
        .iter()
        .map(|tot| tot - realized)
        .fold(0.0_f64, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn hedge_equal_rewards_keep_distribution() {
        let mut h = HedgeState::new(2, EtaSchedule::Fixed { eta: 0.7 });
        h.update(&[1.0, 1.0], 0).unwrap();
        assert!(close(h.strategy().probs(), &[0.5, 0.5], 1e-15));
    }

    #[test]
    fn hedge_ln2_step() {
        let h = HedgeState::new(2, EtaSchedule::Fixed { eta: 2f64.ln() });
        let h = hedge_update(&h, &[1.0, 0.0], 0).unwrap();
        assert!(close(h.strategy().probs(), &[2.0 / 3.0, 1.0 / 3.0], 1e-12));
    }

    #[test]
    fn hedge_rejects_nan() {
        let mut h = HedgeState::new(2, EtaSchedule::Anytime);
        assert!(h.update(&[f64::NAN, 0.0], 0).is_err());
        assert!(h.update(&[1.0], 0).is_err());
    }

    #[test]
    fn hedge_survives_huge_horizons() {
        let mut h = HedgeState::new(3, EtaSchedule::Fixed { eta: 1.0 });
        for t in 0..100_000 {
            h.update(&[1.0, 0.0, 0.5], t).unwrap();
        }
        assert!(h.log_weights().iter().all(|w| w.is_finite() || *w == f64::NEG_INFINITY));
        assert_eq!(h.strategy().probs()[0], 1.0);
    }

    #[test]
    fn eta_schedules() {
        let a = EtaSchedule::Anytime;
        assert!((a.eta(4, 0) - 4f64.ln().sqrt()).abs() < 1e-15);
        let h = EtaSchedule::Horizon { rounds: 100 };
        assert!((h.eta(4, 17) - (8.0 * 4f64.ln() / 100.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rm_accumulate_examples() {
        let c = RMState::new(2);
        let c = rm_accumulate(&c, &[1.0, -1.0]).unwrap();
        assert_eq!(c.cumulative_regret(), &[1.0, -1.0]);
        let c = RMState::from_cumulative(vec![3.0, -2.0]).unwrap();
        let c = rm_accumulate(&c, &[-1.0, 4.0]).unwrap();
        assert_eq!(c.cumulative_regret(), &[2.0, 2.0]);
    }

    #[test]
    fn rm_strategy_examples() {
        let s = |c: Vec<f64>| rm_strategy(&RMState::from_cumulative(c).unwrap()).into_vec();
        assert_eq!(s(vec![-1.0, -2.0]), vec![0.5, 0.5]);
        assert_eq!(s(vec![0.0, 5.0]), vec![0.0, 1.0]);
        assert_eq!(s(vec![3.0, 1.0]), vec![0.75, 0.25]);
    }

    #[test]
    fn centred_regret_is_orthogonal_to_strategy() {
        let x = Simplex::new(vec![0.2, 0.5, 0.3]).unwrap();
        let reg = expected_instant_regret(&x, &[0.9, 0.1, 0.4]);
        assert!(x.expectation(&reg).abs() < 1e-15);
    }

    #[test]
    fn full_info_regret_examples() {
        let c = [0.3, 0.3, 0.3];
        let rounds = vec![(&c[..], ActionId(0)), (&c[..], ActionId(2))];
        assert_eq!(full_info_regret(rounds), 0.0);
        let r = [1.0, 0.0];
        assert_eq!(full_info_regret(vec![(&r[..], ActionId(1))]), 1.0);
        assert_eq!(full_info_regret(Vec::<(&[f64], ActionId)>::new()), 0.0);
    }
}
