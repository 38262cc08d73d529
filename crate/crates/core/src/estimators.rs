//! Imagined-reward constructions: importance weighting, UCB, Thompson sampling
//! and optimistic Thompson sampling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posterior::{Marginal, RewardModel};
use crate::rng::RngStream;
use crate::simplex::{ActionId, Simplex};

/// Surrogate full-information reward vector for one round.
#[derive(Clone, Debug, PartialEq)]
pub struct ImaginedReward {
    pub values: Vec<f64>,
    /// False for importance-weighted vectors, whose entries can leave `[0, 1]`.
    pub clipped: bool,
}

impl ImaginedReward {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// How model-based estimates are clipped into the reward range.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClipMode {
    /// `clip_[0,1]`.
    #[default]
    Both,
    /// `min(., 1)` only.
    Upper,
}

impl ClipMode {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            ClipMode::Both => v.clamp(0.0, 1.0),
            ClipMode::Upper => v.min(1.0),
        }
    }
}

/// Confidence-width schedule for UCB.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum BetaSchedule {
    /// `beta_t = sqrt(2 ln(|A| sqrt(t)))`, with `t` floored at 1.
    #[default]
    Anytime,
    /// `scale * sqrt(2 ln(|A| |B| sqrt(T)))`, constant over the run.
    Scaled {
        scale: f64,
        n_opponent: usize,
        horizon: usize,
    },
}

impl BetaSchedule {
    pub fn beta(&self, n_actions: usize, t: usize) -> f64 {
        match *self {
            BetaSchedule::Anytime => {
                let t = t.max(1) as f64;
                (2.0 * (n_actions as f64 * t.sqrt()).ln()).max(0.0).sqrt()
            }
            BetaSchedule::Scaled {
                scale,
                n_opponent,
                horizon,
            } => {
                let inner = n_actions as f64 * n_opponent as f64 * (horizon.max(1) as f64).sqrt();
                scale * (2.0 * inner.ln()).max(0.0).sqrt()
            }
        }
    }
}

/// Number of posterior samples per action for OTS.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum OtsSampleCount {
    Fixed { m: usize },
    Theoretical,
}

impl Default for OtsSampleCount {
    fn default() -> Self {
        OtsSampleCount::Fixed { m: 10 }
    }
}

impl OtsSampleCount {
    pub fn count(&self, n_actions: usize, t: usize) -> usize {
        match *self {
            OtsSampleCount::Fixed { m } => m.max(1),
            OtsSampleCount::Theoretical => {
                if t < 2 {
                    1
                } else {
                    theoretical_m(n_actions, t)
                }
            }
        }
    }
}

/// Standard normal upper tail `1 - Phi(x)`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

pub fn normal_cdf(x: f64) -> f64 {
    normal_sf(-x)
}

/// `ceil(ln sqrt(t) / ln(1 / Phi(sqrt(beta'))))` with `beta' = 2 ln(|A| sqrt(t))`.
pub fn theoretical_m(n_actions: usize, t: usize) -> usize {
    assert!(t >= 2, "theoretical M needs t >= 2");
    let t = t as f64;
    let beta_prime = 2.0 * (n_actions as f64 * t.sqrt()).ln();
    // ln(1/Phi(x)) = -ln(1 - Q(x)), evaluated without cancellation.
    let denom = -(-normal_sf(beta_prime.sqrt())).ln_1p();
    let m = (0.5 * t.ln() / denom).ceil();
    m.max(1.0) as usize
}

/// Loss-based importance-weighted estimate
/// `R(a) = 1 - 1{A=a} (1 - reward) / X_a`.
pub fn iwe_reward(x: &Simplex, played: ActionId, reward: f64) -> Result<ImaginedReward> {
    let p = x.prob(played);
    if !(p > 0.0) {
        return Err(Error::ZeroProbability { action: played.0 });
    }
    let mut values = vec![1.0; x.len()];
    values[played.0] = 1.0 - (1.0 - reward) / p;
    Ok(ImaginedReward {
        values,
        clipped: false,
    })
}

/// Importance-weighted regret estimate for RM with a uniform mixture:
/// `reg(a) = 1{A=a} R / X_a - R Xhat_A / X_A`.
pub fn iwe_rm_regret(x: &Simplex, xhat: &Simplex, played: ActionId, reward: f64) -> Result<Vec<f64>> {
    let p = x.prob(played);
    if !(p > 0.0) {
        return Err(Error::ZeroProbability { action: played.0 });
    }
    let base = reward * xhat.prob(played) / p;
    let mut reg = vec![-base; x.len()];
    reg[played.0] += reward / p;
    Ok(reg)
}

/// `(1 - gamma) Xhat + gamma / |A|`.
pub fn mixture(xhat: &Simplex, gamma: f64) -> Simplex {
    let n = xhat.len() as f64;
    let probs: Vec<f64> = xhat
        .probs()
        .iter()
        .map(|p| (1.0 - gamma) * p + gamma / n)
        .collect();
    Simplex::normalize(&probs).expect("mixture of simplices is a simplex")
}

/// Largest mixture weight the default tuning will return.
pub const MAX_DEFAULT_GAMMA: f64 = 0.5;

/// `((1 + noise_var) |A|^2 / (2T))^(1/3)`, capped at [`MAX_DEFAULT_GAMMA`].
pub fn default_gamma(noise_var: f64, n_actions: usize, horizon: usize) -> f64 {
    let n = n_actions as f64;
    let g = ((1.0 + noise_var) * n * n / (2.0 * horizon.max(1) as f64)).cbrt();
    g.min(MAX_DEFAULT_GAMMA)
}

pub fn ucb_from_marginals(marginals: &[Marginal], beta: f64, clip: ClipMode) -> ImaginedReward {
    ImaginedReward {
        values: marginals
            .iter()
            .map(|m| clip.apply(m.mean + beta * m.std))
            .collect(),
        clipped: true,
    }
}

/// One draw per action, in action order.
pub fn ts_from_marginals(marginals: &[Marginal], rng: &mut RngStream, clip: ClipMode) -> ImaginedReward {
    ImaginedReward {
        values: marginals
            .iter()
            .map(|m| clip.apply(m.mean + m.std * rng.standard_normal()))
            .collect(),
        clipped: true,
    }
}

/// Pre-clip per-action maximum of `m` draws.
///
/// Draws are taken sample-major (all actions for draw 1, then draw 2, ...), so
/// the first sweep reproduces [`ts_from_marginals`] on the same stream and a
/// larger `m` only ever adds draws on top of a smaller one.
pub fn ots_max_samples(marginals: &[Marginal], m: usize, rng: &mut RngStream) -> Vec<f64> {
    let mut best = vec![f64::NEG_INFINITY; marginals.len()];
    for _ in 0..m.max(1) {
        for (b, mg) in best.iter_mut().zip(marginals) {
            let s = mg.mean + mg.std * rng.standard_normal();
            if s > *b {
                *b = s;
            }
        }
    }
    best
}

pub fn ots_from_marginals(marginals: &[Marginal], m: usize, rng: &mut RngStream, clip: ClipMode) -> ImaginedReward {
    ImaginedReward {
        values: ots_max_samples(marginals, m, rng)
            .into_iter()
            .map(|v| clip.apply(v))
            .collect(),
        clipped: true,
    }
}

pub fn ucb_reward<M: RewardModel>(
    belief: &M,
    ctx: &M::Context,
    beta: &BetaSchedule,
    t: usize,
    clip: ClipMode,
) -> Result<ImaginedReward> {
    let marg = belief.predict_all(ctx)?;
    Ok(ucb_from_marginals(&marg, beta.beta(belief.n_actions(), t), clip))
}

pub fn ts_reward<M: RewardModel>(belief: &M, ctx: &M::Context, rng: &mut RngStream, clip: ClipMode) -> Result<ImaginedReward> {
    let marg = belief.predict_all(ctx)?;
    Ok(ts_from_marginals(&marg, rng, clip))
}

pub fn ots_reward<M: RewardModel>(
    belief: &M,
    ctx: &M::Context,
    count: &OtsSampleCount,
    t: usize,
    rng: &mut RngStream,
    clip: ClipMode,
) -> Result<ImaginedReward> {
    let marg = belief.predict_all(ctx)?;
    Ok(ots_from_marginals(&marg, count.count(belief.n_actions(), t), rng, clip))
}

/// The three terms whose sum is the one-step regret `f(a,B) - f(A,B)`:
/// `(R(a) - R(A), f(a,B) - R(a), R(A) - f(A,B))`.
pub fn regret_decomposition(r_tilde: &[f64], a: ActionId, played: ActionId, f_a: f64, f_played: f64) -> (f64, f64, f64) {
    (
        r_tilde[a.0] - r_tilde[played.0],
        f_a - r_tilde[a.0],
        r_tilde[played.0] - f_played,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform2() -> Simplex {
        Simplex::uniform(2)
    }

    #[test]
    fn iwe_examples() {
        assert_eq!(iwe_reward(&uniform2(), ActionId(0), 1.0).unwrap().values, vec![1.0, 1.0]);
        assert_eq!(iwe_reward(&uniform2(), ActionId(0), 0.5).unwrap().values, vec![0.0, 1.0]);
        let pm = Simplex::point_mass(2, 1);
        assert!(matches!(
            iwe_reward(&pm, ActionId(0), 0.5),
            Err(Error::ZeroProbability { action: 0 })
        ));
    }

    #[test]
    fn iwe_rm_examples() {
        let x = uniform2();
        assert_eq!(iwe_rm_regret(&x, &x, ActionId(0), 1.0).unwrap(), vec![1.0, -1.0]);
        assert_eq!(iwe_rm_regret(&x, &x, ActionId(1), 0.0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn mixture_examples() {
        let xhat = Simplex::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(mixture(&xhat, 0.0), xhat);
        assert_eq!(mixture(&xhat, 0.5).probs(), &[0.75, 0.25]);
        assert!((default_gamma(0.0, 2, 1000) - 0.126).abs() < 1e-3);
        assert_eq!(default_gamma(0.0, 50, 10), MAX_DEFAULT_GAMMA);
    }

    #[test]
    fn ucb_examples() {
        let r = ucb_from_marginals(&[Marginal::new(0.9, 0.5)], 1.0, ClipMode::Both);
        assert_eq!(r.values, vec![1.0]);
        let r = ucb_from_marginals(&[Marginal::new(0.2, 0.1)], 2.0, ClipMode::Both);
        assert!((r.values[0] - 0.4).abs() < 1e-15);
        let r = ucb_from_marginals(&[Marginal::new(-0.3, 0.0), Marginal::new(0.7, 0.0)], 3.0, ClipMode::Both);
        assert_eq!(r.values, vec![0.0, 0.7]);
        let r = ucb_from_marginals(&[Marginal::new(-0.3, 0.0)], 3.0, ClipMode::Upper);
        assert_eq!(r.values, vec![-0.3]);
    }

    #[test]
    fn beta_default() {
        let b = BetaSchedule::Anytime;
        assert!((b.beta(4, 1) - (2.0 * 4f64.ln()).sqrt()).abs() < 1e-15);
        assert!((b.beta(4, 0) - b.beta(4, 1)).abs() < 1e-15);
        let s = BetaSchedule::Scaled {
            scale: 0.2,
            n_opponent: 5,
            horizon: 100,
        };
        assert!((s.beta(10, 7) - 0.2 * (2.0 * 500f64.ln()).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_std_is_deterministic() {
        let marg = [Marginal::new(0.3, 0.0), Marginal::new(1.4, 0.0)];
        let mut rng = RngStream::new(1, 0);
        assert_eq!(ts_from_marginals(&marg, &mut rng, ClipMode::Both).values, vec![0.3, 1.0]);
        assert_eq!(ots_from_marginals(&marg, 7, &mut rng, ClipMode::Both).values, vec![0.3, 1.0]);
    }

    #[test]
    fn ots_with_one_sample_is_ts() {
        let marg = [Marginal::new(0.3, 0.4), Marginal::new(0.6, 0.2), Marginal::new(0.0, 1.0)];
        let mut a = RngStream::new(11, 0);
        let mut b = RngStream::new(11, 0);
        for _ in 0..50 {
            assert_eq!(
                ts_from_marginals(&marg, &mut a, ClipMode::Both),
                ots_from_marginals(&marg, 1, &mut b, ClipMode::Both)
            );
        }
    }

    #[test]
    fn ts_median_frequency() {
        let marg = [Marginal::new(0.0, 1.0)];
        let mut rng = RngStream::new(3, 0);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| ts_from_marginals(&marg, &mut rng, ClipMode::Upper).values[0] >= 0.0)
            .count();
        let f = hits as f64 / n as f64;
        assert!((0.49..=0.51).contains(&f), "{f}");
    }

    #[test]
    fn ots_max_order_statistic() {
        let marg = [Marginal::new(0.0, 1.0)];
        let mut rng = RngStream::new(4, 0);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| ots_max_samples(&marg, 10, &mut rng)[0] >= 0.0)
            .count();
        let f = hits as f64 / n as f64;
        let expect = 1.0 - 0.5f64.powi(10);
        assert!((f - expect).abs() <= 0.002, "{f}");
    }

    #[test]
    fn theoretical_m_examples() {
        assert_eq!(theoretical_m(2, 4), 15);
        assert!(theoretical_m(50, 1_000_000) > 100_000);
        let mut prev = 0;
        let mut t = 2;
        while t <= 1_000_000 {
            let m = theoretical_m(2, t);
            assert!(m >= prev, "t={t}");
            prev = m;
            t = t * 11 / 10 + 1;
        }
    }

    #[test]
    fn normal_cdf_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-12);
    }
}
