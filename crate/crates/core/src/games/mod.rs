//! Game environments.

mod radar;
mod traffic;

pub use radar::{RadarGame, RadarParams, N_FREQS, N_SUBPULSES};
pub use traffic::{
    bpr_latency, CompositeKernel, KernelParams, Player, TrafficGame, TrafficInput, TrafficModel, BPR_ALPHA,
    BPR_POWER,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::simplex::ActionId;
use crate::types::{RewardMap, RewardSample};

/// Observation noise level. The level is read as a variance unless `is_std`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    pub level: f64,
    #[serde(default)]
    pub is_std: bool,
}

impl Noise {
    pub const NONE: Noise = Noise {
        level: 0.0,
        is_std: false,
    };

    pub fn variance(level: f64) -> Self {
        Self { level, is_std: false }
    }

    pub fn std(&self) -> f64 {
        if self.is_std {
            self.level
        } else {
            self.level.max(0.0).sqrt()
        }
    }
}

impl Default for Noise {
    fn default() -> Self {
        Noise::variance(0.1)
    }
}

/// A repeated two-player game seen from the learner's side.
pub trait GameEnv {
    fn n_agent_actions(&self) -> usize;

    fn n_opponent_actions(&self) -> usize;

    /// Noiseless payoff on the raw scale.
    fn mean_reward(&self, a: ActionId, b: ActionId) -> f64;

    fn noise_std(&self) -> f64;

    fn reward_map(&self) -> RewardMap;

    /// Mean plus Gaussian noise. Noiseless games return the mean exactly and
    /// draw nothing.
    fn observe_reward(&self, a: ActionId, b: ActionId, rng: &mut RngStream) -> RewardSample {
        let mean = self.mean_reward(a, b);
        let std = self.noise_std();
        let value = if std > 0.0 { mean + std * rng.standard_normal() } else { mean };
        self.reward_map().sample(value)
    }
}

/// Finite two-player zero-sum game with payoff `theta[(a, b)]` to the row
/// player; the column player receives the negation.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixGame {
    payoff: DMatrix<f64>,
    noise: Noise,
    map: RewardMap,
}

impl MatrixGame {
    pub fn new(payoff: DMatrix<f64>, noise: Noise, map: RewardMap) -> Result<Self> {
        if payoff.is_empty() {
            return Err(Error::Config("payoff matrix is empty".into()));
        }
        if payoff.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("payoff matrix"));
        }
        if !(noise.level >= 0.0) {
            return Err(Error::Config(format!("noise level must be non-negative, got {}", noise.level)));
        }
        Ok(Self { payoff, noise, map })
    }

    /// Entries i.i.d. uniform on `[-1, 1]`, filled row by row; rewards mapped
    /// by `r -> (r + 1) / 2`.
    pub fn random_uniform(n_a: usize, n_b: usize, noise: Noise, rng: &mut RngStream) -> Result<Self> {
        let payoff = DMatrix::from_row_iterator(n_a, n_b, (0..n_a * n_b).map(|_| 2.0 * rng.uniform() - 1.0));
        Self::new(payoff, noise, RewardMap::SYMMETRIC_UNIT)
    }

    /// Entries i.i.d. `N(mean, variance)`, filled row by row; rewards mapped
    /// from the matrix's own range.
    pub fn random_normal(n_a: usize, n_b: usize, mean: f64, variance: f64, noise: Noise, rng: &mut RngStream) -> Result<Self> {
        let std = variance.sqrt();
        let payoff = DMatrix::from_row_iterator(n_a, n_b, (0..n_a * n_b).map(|_| rng.normal(mean, std)));
        let map = range_map(&payoff);
        Self::new(payoff, noise, map)
    }

    pub fn payoff(&self) -> &DMatrix<f64> {
        &self.payoff
    }

    pub fn noise(&self) -> Noise {
        self.noise
    }

    /// Noise variance after the reward map, as seen by a learner.
    pub fn mapped_noise_var(&self) -> f64 {
        let s = self.noise.std() / self.map.scale();
        s * s
    }

    /// Mean rewards of every row against column `b`, mapped into `[0, 1]`.
    pub fn mapped_column(&self, b: ActionId) -> Vec<f64> {
        self.payoff.column(b.0).iter().map(|&v| self.map.affine(v)).collect()
    }

    pub fn column(&self, b: ActionId) -> Vec<f64> {
        self.payoff.column(b.0).iter().copied().collect()
    }

    /// The same game from the column player's side: payoff `-theta^T`.
    pub fn opponent_view(&self) -> MatrixGame {
        MatrixGame {
            payoff: -self.payoff.transpose(),
            noise: self.noise,
            map: self.map.negated(),
        }
    }
}

/// Reads a payoff matrix from headerless CSV, one matrix row per line.
pub fn read_payoff_csv<R: std::io::Read>(input: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    line: i + 1,
                    msg: format!("not a number: `{f}`"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("payoff entry"));
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        return Err(Error::Config("payoff matrix is empty".into()));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
        return Err(Error::ShapeMismatch {
            expected: cols,
            got: bad.len(),
        });
    }
    Ok(DMatrix::from_row_iterator(rows.len(), cols, rows.into_iter().flatten()))
}

/// `[min, max]` of the entries, widened if the matrix is constant.
pub fn range_map(payoff: &DMatrix<f64>) -> RewardMap {
    let lo = payoff.min();
    let hi = payoff.max();
    if hi > lo {
        RewardMap::new(lo, hi)
    } else {
        RewardMap::new(lo - 0.5, hi + 0.5)
    }
}

impl GameEnv for MatrixGame {
    fn n_agent_actions(&self) -> usize {
        self.payoff.nrows()
    }

    fn n_opponent_actions(&self) -> usize {
        self.payoff.ncols()
    }

    fn mean_reward(&self, a: ActionId, b: ActionId) -> f64 {
        self.payoff[(a.0, b.0)]
    }

    fn noise_std(&self) -> f64 {
        self.noise.std()
    }

    fn reward_map(&self) -> RewardMap {
        self.map
    }
}

/// `theta = [[1, 1 - delta], [1 - delta, 1]]`, noiseless, rewards already in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleGame {
    pub delta: f64,
}

impl CounterexampleGame {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(Self { delta })
    }

    pub fn payoff(&self) -> DMatrix<f64> {
        let d = 1.0 - self.delta;
        DMatrix::from_row_slice(2, 2, &[1.0, d, d, 1.0])
    }

    pub fn game(&self) -> MatrixGame {
        MatrixGame::new(self.payoff(), Noise::NONE, RewardMap::IDENTITY).expect("counterexample payoff is finite")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payoff_csv() {
        let m = read_payoff_csv("1, 0\n# comment\n0.5, -1\n".as_bytes()).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (2, 2));
        assert_eq!(m[(1, 1)], -1.0);
        assert!(read_payoff_csv("1,2\n3\n".as_bytes()).is_err());
        assert!(read_payoff_csv("1,x\n".as_bytes()).is_err());
        assert!(read_payoff_csv("".as_bytes()).is_err());
    }

    #[test]
    fn counterexample_entries() {
        let g = CounterexampleGame::new(0.1).unwrap().game();
        assert!((g.mean_reward(ActionId(1), ActionId(0)) - 0.9).abs() < 1e-15);
        assert_eq!(g.mean_reward(ActionId(0), ActionId(0)), 1.0);
        assert!(CounterexampleGame::new(1.0).is_err());
    }

    #[test]
    fn identity_matrix_game() {
        let g = MatrixGame::new(DMatrix::identity(2, 2), Noise::NONE, RewardMap::IDENTITY).unwrap();
        assert_eq!(g.mean_reward(ActionId(0), ActionId(0)), 1.0);
    }

    #[test]
    fn noiseless_observation_is_mean() {
        let g = CounterexampleGame::new(0.3).unwrap().game();
        let mut rng = RngStream::new(0, 0);
        let s = g.observe_reward(ActionId(0), ActionId(1), &mut rng);
        assert_eq!(s.value, 0.7);
        assert_eq!(s.clipped, 0.7);
    }

    #[test]
    fn noisy_sample_mean_clt() {
        let g = MatrixGame::new(DMatrix::from_element(1, 1, 0.2), Noise::variance(0.1), RewardMap::SYMMETRIC_UNIT).unwrap();
        let mut rng = RngStream::new(8, 2);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| g.observe_reward(ActionId(0), ActionId(0), &mut rng).value)
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.2).abs() <= 3.0 * (0.1f64 / n as f64).sqrt());
    }

    #[test]
    fn noise_std_flag() {
        assert!((Noise::variance(0.1).std() - 0.1f64.sqrt()).abs() < 1e-15);
        assert_eq!(Noise { level: 0.1, is_std: true }.std(), 0.1);
    }

    #[test]
    fn opponent_view_is_zero_sum() {
        let mut rng = RngStream::new(1, 3);
        let g = MatrixGame::random_uniform(4, 3, Noise::default(), &mut rng).unwrap();
        let o = g.opponent_view();
        for a in 0..4 {
            for b in 0..3 {
                let (a, b) = (ActionId(a), ActionId(b));
                assert_eq!(g.mean_reward(a, b) + o.mean_reward(b, a), 0.0);
                let y = g.mean_reward(a, b);
                assert!((g.reward_map().apply(y) + o.reward_map().apply(-y) - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn uniform_entries_ks() {
        let mut rng = RngStream::new(2024, 3);
        let g = MatrixGame::random_uniform(400, 250, Noise::NONE, &mut rng).unwrap();
        let mut v: Vec<f64> = g.payoff().iter().copied().collect();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let ks = v
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let cdf = (x + 1.0) / 2.0;
                (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks <= 0.02, "{ks}");
        assert!(v[0] >= -1.0 && v[v.len() - 1] <= 1.0);
    }
}
