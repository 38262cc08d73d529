//! Frequency-agile radar against a noise jammer, as a linear game in the
//! per-frequency radar cross section.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{GameEnv, MatrixGame, Noise};
use crate::error::Result;
use crate::posterior::{LinearGaussianBelief, LinearModel};
use crate::simplex::ActionId;
use crate::types::RewardMap;

pub const N_FREQS: usize = 3;
pub const N_SUBPULSES: usize = 3;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;
const BOLTZMANN: f64 = 1.380_649e-23;
const REFERENCE_TEMP_K: f64 = 290.0;

fn db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadarParams {
    /// Radar transmit power, W.
    pub tx_power: f64,
    /// Radar antenna gain, dB.
    pub tx_gain_db: f64,
    /// Lowest carrier frequency, Hz.
    pub f0: f64,
    /// Subpulse bandwidth and carrier spacing, Hz.
    pub bandwidth: f64,
    /// Radar-to-jammer (and target) distance, m.
    pub range: f64,
    /// Kept for completeness; detection probability is not modeled.
    pub false_alarm: f64,
    /// Jammer transmit power, W.
    pub jam_power: f64,
    /// Jammer antenna gain, dB.
    pub jam_gain_db: f64,
    /// Radar cross section per carrier frequency.
    pub rcs: [f64; N_FREQS],
    /// Observation noise on the raw SINR scale.
    pub noise: Noise,
}

impl Default for RadarParams {
    fn default() -> Self {
        Self {
            tx_power: 30e3,
            tx_gain_db: 32.0,
            f0: 3e9,
            bandwidth: 2e6,
            range: 100e3,
            false_alarm: 1e-4,
            jam_power: 100.0,
            jam_gain_db: 15.0,
            rcs: [1.0; N_FREQS],
            noise: Noise::variance(0.01),
        }
    }
}

impl RadarParams {
    pub fn frequency(&self, k: usize) -> f64 {
        self.f0 + k as f64 * self.bandwidth
    }

    fn wavelength(&self, k: usize) -> f64 {
        SPEED_OF_LIGHT / self.frequency(k)
    }

    /// Monostatic echo power per unit RCS: `P_T G_T^2 lambda^2 / ((4 pi)^3 R^4)`.
    pub fn echo_gain(&self, k: usize) -> f64 {
        let g = db(self.tx_gain_db);
        let l = self.wavelength(k);
        self.tx_power * g * g * l * l / ((4.0 * PI).powi(3) * self.range.powi(4))
    }

    /// One-way jammer power at the radar: `P_J G_J G_T lambda^2 / ((4 pi)^2 R^2)`.
    pub fn jam_received(&self, k: usize) -> f64 {
        let l = self.wavelength(k);
        self.jam_power * db(self.jam_gain_db) * db(self.tx_gain_db) * l * l / ((4.0 * PI).powi(2) * self.range.powi(2))
    }

    /// Thermal noise in one subpulse bandwidth: `k_B T_0 B`.
    pub fn noise_floor(&self) -> f64 {
        BOLTZMANN * REFERENCE_TEMP_K * self.bandwidth
    }
}

/// 27 radar actions (a carrier per subpulse) against 3 jammer carriers.
#[derive(Clone, Debug, PartialEq)]
pub struct RadarGame {
    params: RadarParams,
    /// `features[a * 3 + b]`, SINR coefficients per unit RCS.
    features: Vec<[f64; N_FREQS]>,
    matrix: MatrixGame,
}

impl RadarGame {
    pub fn new(params: RadarParams) -> Result<Self> {
        let n_a = N_FREQS.pow(N_SUBPULSES as u32);
        let mut features = Vec::with_capacity(n_a * N_FREQS);
        for a in 0..n_a {
            let subs = Self::subpulses(ActionId(a));
            for b in 0..N_FREQS {
                let mut phi = [0.0; N_FREQS];
                for &f in &subs {
                    let jam = if f == b { params.jam_received(f) } else { 0.0 };
                    phi[f] += params.echo_gain(f) / (params.noise_floor() + jam);
                }
                features.push(phi);
            }
        }
        let payoff = DMatrix::from_fn(n_a, N_FREQS, |a, b| dot(&features[a * N_FREQS + b], &params.rcs));
        let hi = payoff.max();
        let map = RewardMap::new(0.0, if hi > 0.0 { hi } else { 1.0 });
        let matrix = MatrixGame::new(payoff, params.noise, map)?;
        Ok(Self {
            params,
            features,
            matrix,
        })
    }

    /// Carrier index used by each subpulse; action `a = 9 s0 + 3 s1 + s2`.
    pub fn subpulses(a: ActionId) -> [usize; N_SUBPULSES] {
        [a.0 / 9, (a.0 / 3) % 3, a.0 % 3]
    }

    pub fn params(&self) -> &RadarParams {
        &self.params
    }

    pub fn matrix(&self) -> &MatrixGame {
        &self.matrix
    }

    pub fn feature(&self, a: ActionId, b: ActionId) -> [f64; N_FREQS] {
        self.features[a.0 * N_FREQS + b.0]
    }

    /// `phi(a, b)^T theta` for an arbitrary RCS vector.
    pub fn sinr(&self, a: ActionId, b: ActionId, theta: &[f64; N_FREQS]) -> f64 {
        dot(&self.feature(a, b), theta)
    }

    /// Linear belief over the RCS in reward-map units: features are divided by
    /// the map's scale so that `phi^T theta` is the mapped reward.
    pub fn linear_model(&self, prior_var: f64, noise_var: f64) -> Result<LinearModel> {
        let scale = self.matrix.reward_map().scale();
        let feats = self
            .features
            .iter()
            .map(|f| DVector::from_iterator(N_FREQS, f.iter().map(|v| v / scale)))
            .collect();
        LinearModel::new(
            LinearGaussianBelief::isotropic(N_FREQS, prior_var, noise_var)?,
            self.matrix.n_agent_actions(),
            N_FREQS,
            feats,
        )
    }
}

fn dot(a: &[f64; N_FREQS], b: &[f64; N_FREQS]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl GameEnv for RadarGame {
    fn n_agent_actions(&self) -> usize {
        self.matrix.n_agent_actions()
    }

    fn n_opponent_actions(&self) -> usize {
        N_FREQS
    }

    fn mean_reward(&self, a: ActionId, b: ActionId) -> f64 {
        self.matrix.mean_reward(a, b)
    }

    fn noise_std(&self) -> f64 {
        self.matrix.noise_std()
    }

    fn reward_map(&self) -> RewardMap {
        self.matrix.reward_map()
    }
}
