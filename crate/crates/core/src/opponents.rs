//! Non-learning opponents. Self-play is a second learner and lives in the
//! harness.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::{RadarGame, N_FREQS};
use crate::rng::RngStream;
use crate::simplex::{ActionId, Simplex};

pub const DEFAULT_PERIOD: usize = 50;
pub const DEFAULT_WINDOW: usize = 10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    #[default]
    Lowest,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OpponentSpec {
    SelfPlay,
    BestResponse {
        #[serde(default)]
        tie: TieBreak,
    },
    /// Fixed mixed strategy; uniform when `probs` is absent.
    Stationary {
        #[serde(default)]
        probs: Option<Vec<f64>>,
    },
    NonStationary {
        #[serde(default = "default_period")]
        period: usize,
    },
    AdaptiveJammer {
        #[serde(default = "default_window")]
        window: usize,
    },
}

fn default_period() -> usize {
    DEFAULT_PERIOD
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

pub const OPPONENT_NAMES: [&str; 5] = ["self-play", "best-response", "stationary", "non-stationary", "adaptive-jammer"];

impl OpponentSpec {
    pub fn name(&self) -> &'static str {
        match self {
            OpponentSpec::SelfPlay => "self-play",
            OpponentSpec::BestResponse { .. } => "best-response",
            OpponentSpec::Stationary { .. } => "stationary",
            OpponentSpec::NonStationary { .. } => "non-stationary",
            OpponentSpec::AdaptiveJammer { .. } => "adaptive-jammer",
        }
    }

    pub fn validate(&self, n_actions: usize) -> Result<()> {
        match self {
            OpponentSpec::NonStationary { period: 0 } => Err(Error::Config("period must be at least 1".into())),
            OpponentSpec::AdaptiveJammer { window: 0 } => Err(Error::Config("window must be at least 1".into())),
            OpponentSpec::Stationary { probs: Some(p) } => {
                if p.len() != n_actions {
                    return Err(Error::ShapeMismatch {
                        expected: n_actions,
                        got: p.len(),
                    });
                }
                Simplex::new(p.clone()).map(|_| ())
            }
            _ => Ok(()),
        }
    }
}

impl FromStr for OpponentSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "self-play" => OpponentSpec::SelfPlay,
            "best-response" => OpponentSpec::BestResponse { tie: TieBreak::Lowest },
            "stationary" => OpponentSpec::Stationary { probs: None },
            "non-stationary" => OpponentSpec::NonStationary { period: DEFAULT_PERIOD },
            "adaptive-jammer" => OpponentSpec::AdaptiveJammer { window: DEFAULT_WINDOW },
            other => {
                return Err(Error::Config(format!(
                    "unknown opponent `{other}` (expected one of {})",
                    OPPONENT_NAMES.join(", ")
                )))
            }
        })
    }
}

impl fmt::Display for OpponentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Expected row-player payoff of each column, `x^T A`.
fn column_values(payoff: &DMatrix<f64>, x: &Simplex) -> Vec<f64> {
    (0..payoff.ncols())
        .map(|b| payoff.column(b).iter().zip(x.probs()).map(|(v, p)| v * p).sum())
        .collect()
}

/// Column minimizing the row player's expected payoff; lowest index on ties.
pub fn best_response_action(payoff: &DMatrix<f64>, x: &Simplex) -> Result<ActionId> {
    if x.len() != payoff.nrows() {
        return Err(Error::ShapeMismatch {
            expected: payoff.nrows(),
            got: x.len(),
        });
    }
    let v = column_values(payoff, x);
    let mut best = 0;
    for (b, &val) in v.iter().enumerate() {
        if val < v[best] {
            best = b;
        }
    }
    Ok(ActionId(best))
}

pub fn best_response(payoff: &DMatrix<f64>, x: &Simplex) -> Result<Simplex> {
    let b = best_response_action(payoff, x)?;
    Ok(Simplex::point_mass(payoff.ncols(), b.0))
}

/// Uniform draw among all minimizing columns (exact ties only).
fn best_response_random(payoff: &DMatrix<f64>, x: &Simplex, rng: &mut RngStream) -> Result<ActionId> {
    let lowest = best_response_action(payoff, x)?;
    let v = column_values(payoff, x);
    let ties: Vec<usize> = (0..v.len()).filter(|&b| v[b] == v[lowest.0]).collect();
    Ok(ActionId(ties[rng.below(ties.len())]))
}

/// Flat Dirichlet draw via normalized exponentials.
pub fn dirichlet_uniform(n: usize, rng: &mut RngStream) -> Simplex {
    let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.uniform()).ln()).collect();
    Simplex::normalize(&w).expect("exponential draws are positive")
}

/// Strategy redrawn from a flat Dirichlet at every multiple of `period`.
#[derive(Clone, Debug, PartialEq)]
pub struct NonStationary {
    period: usize,
    n_actions: usize,
    current: Option<Simplex>,
}

impl NonStationary {
    pub fn new(n_actions: usize, period: usize) -> Result<Self> {
        if period == 0 {
            return Err(Error::Config("period must be at least 1".into()));
        }
        Ok(Self {
            period,
            n_actions,
            current: None,
        })
    }

    /// Call once per round with increasing `t`.
    pub fn strategy_at(&mut self, t: usize, rng: &mut RngStream) -> &Simplex {
        if t % self.period == 0 || self.current.is_none() {
            self.current = Some(dirichlet_uniform(self.n_actions, rng));
        }
        self.current.as_ref().expect("set above")
    }
}

/// Jams each carrier with probability proportional to how often the radar
/// used it over its last `window` pulses.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveJammer {
    window: usize,
    history: VecDeque<ActionId>,
}

impl AdaptiveJammer {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        Ok(Self {
            window,
            history: VecDeque::with_capacity(window),
        })
    }

    pub fn record(&mut self, radar_action: ActionId) {
        if self.history.len() == self.window {
            self.history.pop_front();
        }
        self.history.push_back(radar_action);
    }

    pub fn counts(&self) -> [f64; N_FREQS] {
        let mut n = [0.0; N_FREQS];
        for &a in &self.history {
            for f in RadarGame::subpulses(a) {
                n[f] += 1.0;
            }
        }
        n
    }

    /// Uniform before any pulse is seen.
    pub fn strategy(&self) -> Simplex {
        jammer_strategy(&self.counts())
    }
}

/// `P(f_i) ∝ N_i`; uniform when all counts are zero.
pub fn jammer_strategy(counts: &[f64]) -> Simplex {
    Simplex::normalize(counts).expect("counts are non-negative")
}

/// A running non-learning opponent.
#[derive(Clone, Debug)]
pub enum Opponent {
    BestResponse { payoff: DMatrix<f64>, tie: TieBreak },
    Stationary(Simplex),
    NonStationary(NonStationary),
    AdaptiveJammer(AdaptiveJammer),
}

impl Opponent {
    /// `payoff` is the row player's raw payoff, used by best response only.
    pub fn from_spec(spec: &OpponentSpec, payoff: &DMatrix<f64>) -> Result<Self> {
        let n = payoff.ncols();
        spec.validate(n)?;
        Ok(match spec {
            OpponentSpec::SelfPlay => {
                return Err(Error::Config("self-play is driven by a second learner, not an Opponent".into()))
            }
            OpponentSpec::BestResponse { tie } => Opponent::BestResponse {
                payoff: payoff.clone(),
                tie: *tie,
            },
            OpponentSpec::Stationary { probs } => Opponent::Stationary(match probs {
                Some(p) => Simplex::new(p.clone())?,
                None => Simplex::uniform(n),
            }),
            OpponentSpec::NonStationary { period } => Opponent::NonStationary(NonStationary::new(n, *period)?),
            OpponentSpec::AdaptiveJammer { window } => {
                if n != N_FREQS {
                    return Err(Error::Config("adaptive jammer needs the radar game".into()));
                }
                Opponent::AdaptiveJammer(AdaptiveJammer::new(*window)?)
            }
        })
    }

    /// Mixed strategy for round `t` given the agent's sampling distribution.
    pub fn strategy(&mut self, t: usize, agent: &Simplex, rng: &mut RngStream) -> Result<Simplex> {
        Ok(match self {
            Opponent::BestResponse { payoff, tie } => {
                let b = match tie {
                    TieBreak::Lowest => best_response_action(payoff, agent)?,
                    TieBreak::Random => best_response_random(payoff, agent, rng)?,
                };
                Simplex::point_mass(payoff.ncols(), b.0)
            }
            Opponent::Stationary(s) => s.clone(),
            Opponent::NonStationary(ns) => ns.strategy_at(t, rng).clone(),
            Opponent::AdaptiveJammer(j) => j.strategy(),
        })
    }

    /// Draws this round's action.
    pub fn act(&mut self, t: usize, agent: &Simplex, rng: &mut RngStream) -> Result<(ActionId, Simplex)> {
        let y = self.strategy(t, agent, rng)?;
        let b = y.sample(rng);
        Ok((b, y))
    }

    /// Tells the opponent what the agent played.
    pub fn record(&mut self, agent_action: ActionId) {
        if let Opponent::AdaptiveJammer(j) = self {
            j.record(agent_action);
        }
    }
}
