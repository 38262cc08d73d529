//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::AgentSpec;
use crate::error::{Error, Result};
use crate::games::{KernelParams, Noise, RadarParams};
use crate::opponents::OpponentSpec;

pub const SEED_ENV: &str = "OTN_SEED";

/// An agent given by name (`"ots-rm"`) or as a full table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AgentEntry {
    Name(String),
    Spec(AgentSpec),
}

impl AgentEntry {
    pub fn resolve(&self) -> Result<AgentSpec> {
        match self {
            AgentEntry::Name(n) => n.parse(),
            AgentEntry::Spec(s) => Ok(s.clone()),
        }
    }
}

impl From<&str> for AgentEntry {
    fn from(s: &str) -> Self {
        AgentEntry::Name(s.to_string())
    }
}

fn default_noise() -> f64 {
    0.1
}

fn default_rcs_prior_var() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GameConfig {
    /// Entries uniform on `[-1, 1]`, redrawn per run.
    RandomUniform {
        rows: usize,
        cols: usize,
        #[serde(default = "default_noise")]
        noise: f64,
        #[serde(default)]
        noise_is_std: bool,
    },
    /// Entries `N(mean, variance)`, redrawn per run.
    RandomNormal {
        rows: usize,
        cols: usize,
        mean: f64,
        variance: f64,
        #[serde(default = "default_noise")]
        noise: f64,
        #[serde(default)]
        noise_is_std: bool,
    },
    Counterexample {
        delta: f64,
    },
    /// Fixed payoff, rows of the row player's raw payoff.
    Matrix {
        payoff: Vec<Vec<f64>>,
        #[serde(default = "default_noise")]
        noise: f64,
        #[serde(default)]
        noise_is_std: bool,
    },
    Radar {
        #[serde(default)]
        params: RadarParams,
        /// Prior variance of each per-frequency RCS coefficient.
        #[serde(default = "default_rcs_prior_var")]
        prior_var: f64,
    },
    Traffic(TrafficConfig),
}

impl GameConfig {
    pub fn noise(&self) -> Noise {
        match *self {
            GameConfig::RandomUniform {
                noise, noise_is_std, ..
            }
            | GameConfig::RandomNormal {
                noise, noise_is_std, ..
            }
            | GameConfig::Matrix {
                noise, noise_is_std, ..
            } => Noise {
                level: noise,
                is_std: noise_is_std,
            },
            GameConfig::Counterexample { .. } => Noise::NONE,
            GameConfig::Radar { ref params, .. } => params.noise,
            GameConfig::Traffic(ref t) => Noise {
                level: t.noise,
                is_std: t.noise_is_std,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    /// TNTP net file; the bundled Sioux-Falls network when absent.
    pub network: Option<PathBuf>,
    pub players: usize,
    /// Demand `U^i` shared by every player.
    pub demand: f64,
    pub max_routes: usize,
    pub stretch: f64,
    pub noise: f64,
    pub noise_is_std: bool,
    pub kernel: KernelParams,
    /// GP observation noise in mapped units.
    pub gp_noise_var: f64,
    pub prior_mean: f64,
    /// Observations kept per GP; older half dropped when exceeded.
    pub history_cap: Option<usize>,
    /// Average-congestion level used for samples-to-threshold.
    pub congestion_threshold: Option<f64>,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            network: None,
            players: 20,
            demand: 3000.0,
            max_routes: crate::tntp::DEFAULT_K,
            stretch: crate::tntp::DEFAULT_STRETCH,
            noise: 0.0,
            noise_is_std: false,
            kernel: KernelParams::default(),
            gp_noise_var: 1e-3,
            prior_mean: 1.0,
            history_cap: Some(300),
            congestion_threshold: None,
        }
    }
}

/// Prior over mapped rewards for counts-based beliefs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeliefConfig {
    pub prior_mean: f64,
    pub prior_var: f64,
    /// Likelihood variance in mapped units; the game's mapped noise when absent.
    pub noise_var: Option<f64>,
}

impl Default for BeliefConfig {
    fn default() -> Self {
        Self {
            prior_mean: 0.5,
            prior_var: 0.25,
            noise_var: None,
        }
    }
}

/// Smallest likelihood variance handed to a belief when derived from the game.
pub const MIN_BELIEF_NOISE_VAR: f64 = 1e-4;

fn default_seed() -> u64 {
    2024
}

fn default_runs() -> usize {
    1
}

fn default_per_decade() -> usize {
    30
}

fn default_opponent() -> OpponentSpec {
    OpponentSpec::SelfPlay
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    pub horizon: usize,
    pub agents: Vec<AgentEntry>,
    pub game: GameConfig,
    #[serde(default = "default_opponent")]
    pub opponent: OpponentSpec,
    #[serde(default)]
    pub belief: BeliefConfig,
    #[serde(default = "default_per_decade")]
    pub checkpoints_per_decade: usize,
    /// Solve each run's game for KL-to-Nash columns.
    #[serde(default)]
    pub nash: bool,
    /// Keep full round-by-round logs and write them next to the metrics.
    #[serde(default)]
    pub record_log: bool,
    /// Average-regret level for samples-to-threshold in the summary.
    #[serde(default)]
    pub regret_threshold: Option<f64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies `OTN_SEED` if set.
    pub fn with_env_seed(mut self) -> Result<Self> {
        if let Ok(s) = std::env::var(SEED_ENV) {
            self.seed = s
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got `{s}`")))?;
        }
        Ok(self)
    }

    pub fn agent_specs(&self) -> Result<Vec<AgentSpec>> {
        self.agents.iter().map(AgentEntry::resolve).collect()
    }

    /// Checks everything that can fail before a single round is played.
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.agents.is_empty() {
            return Err(Error::Config("no agents configured".into()));
        }
        self.agent_specs()?;
        let (rows, cols) = match &self.game {
            GameConfig::RandomUniform { rows, cols, .. } | GameConfig::RandomNormal { rows, cols, .. } => (*rows, *cols),
            GameConfig::Counterexample { delta } => {
                crate::games::CounterexampleGame::new(*delta)?;
                (2, 2)
            }
            GameConfig::Matrix { payoff, .. } => {
                let cols = payoff.first().map_or(0, Vec::len);
                if payoff.iter().any(|r| r.len() != cols) {
                    return Err(Error::Config("payoff rows differ in length".into()));
                }
                (payoff.len(), cols)
            }
            GameConfig::Radar { .. } => (crate::games::N_FREQS.pow(crate::games::N_SUBPULSES as u32), crate::games::N_FREQS),
            GameConfig::Traffic(t) => {
                if t.players == 0 {
                    return Err(Error::Config("traffic needs at least one player".into()));
                }
                return Ok(());
            }
        };
        if rows == 0 || cols == 0 {
            return Err(Error::Config("game must have at least one action per player".into()));
        }
        self.opponent.validate(cols)?;
        if matches!(self.game, GameConfig::Radar { .. }) && self.opponent == OpponentSpec::SelfPlay {
            return Err(Error::Config("radar runs need a jammer opponent, not self-play".into()));
        }
        if matches!(self.opponent, OpponentSpec::AdaptiveJammer { .. }) && !matches!(self.game, GameConfig::Radar { .. }) {
            return Err(Error::Config("the adaptive jammer only plays the radar game".into()));
        }
        Ok(())
    }
}
