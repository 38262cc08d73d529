//! Gaussian beliefs over the mean-reward function.

mod counts;
mod gp;
mod linear;

pub use counts::CountsBelief;
pub use gp::{GpBelief, Kernel, DEFAULT_REFACTOR_EVERY, VARIANCE_CLAMP};
pub use linear::{LinearGaussianBelief, LinearModel};

use crate::error::Result;
use crate::simplex::ActionId;

/// Posterior marginal at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Marginal {
    pub mean: f64,
    pub std: f64,
}

impl Marginal {
    pub fn new(mean: f64, std: f64) -> Self {
        Self { mean, std }
    }

    pub fn variance(&self) -> f64 {
        self.std * self.std
    }
}

/// A belief over `f(a, ctx)` for every agent action `a`, where `ctx` is
/// whatever the agent sees of its opponents after a round (an action id in
/// two-player games, an occupancy vector in congestion games).
pub trait RewardModel: Clone + Send {
    type Context: Clone + Send;

    fn n_actions(&self) -> usize;

    /// Agent-side observation noise variance.
    fn noise_var(&self) -> f64;

    fn update(&mut self, a: ActionId, ctx: &Self::Context, reward: f64) -> Result<()>;

    fn predict(&self, a: ActionId, ctx: &Self::Context) -> Result<Marginal>;

    fn predict_all(&self, ctx: &Self::Context) -> Result<Vec<Marginal>> {
        (0..self.n_actions())
            .map(|a| self.predict(ActionId(a), ctx))
            .collect()
    }
}

/// `sum_t 0.5 ln(1 + var_t / noise_var)` over the predictive variances at the
/// sampled points, each taken just before that point was observed.
///
/// Only the sampled locations enter, never the observed values.
pub fn information_gain(variances: &[f64], noise_var: f64) -> f64 {
    variances
        .iter()
        .map(|v| 0.5 * (v.max(0.0) / noise_var).ln_1p())
        .sum()
}
