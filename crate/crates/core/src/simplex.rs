use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Absolute tolerance on the sum of a probability vector.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Index into a finite action set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActionId(pub usize);

impl ActionId {
    pub fn index(self) -> usize {
        self.0
    }

    /// Checked constructor against an action-set cardinality.
    pub fn checked(index: usize, len: usize) -> Result<Self> {
        if index < len {
            Ok(Self(index))
        } else {
            Err(Error::ActionOutOfRange { index, len })
        }
    }
}

impl From<usize> for ActionId {
    fn from(i: usize) -> Self {
        Self(i)
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Probability vector over a finite action set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Simplex {
    probs: Vec<f64>,
}

impl Simplex {
    /// Validates `probs` and renormalizes away any drift within tolerance.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidSimplex("empty".into()));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::NonFinite("simplex"));
            }
            if p < 0.0 {
                return Err(Error::NegativeWeight { index: i, value: p });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidSimplex(format!("entries sum to {sum}")));
        }
        Ok(Self {
            probs: probs.into_iter().map(|p| p / sum).collect(),
        })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform simplex needs at least one action");
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(n: usize, i: usize) -> Self {
        assert!(i < n, "point mass index out of range");
        let mut probs = vec![0.0; n];
        probs[i] = 1.0;
        Self { probs }
    }

    /// Divides by the sum; all-zero input gives the uniform simplex.
    pub fn normalize(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidSimplex("empty".into()));
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::NonFinite("weights"));
            }
            if w < 0.0 {
                return Err(Error::NegativeWeight { index: i, value: w });
            }
        }
        let sum: f64 = weights.iter().sum();
        if sum > 0.0 {
            Ok(Self {
                probs: weights.iter().map(|w| w / sum).collect(),
            })
        } else {
            Ok(Self::uniform(weights.len()))
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, a: ActionId) -> f64 {
        self.probs[a.0]
    }

    pub fn min_prob(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `<self, values>`.
    pub fn expectation(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.probs.len());
        self.probs.iter().zip(values).map(|(p, v)| p * v).sum()
    }

    /// Inverse-CDF draw using exactly one uniform variate.
    pub fn sample(&self, rng: &mut RngStream) -> ActionId {
        let u = rng.uniform();
        let mut cum = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            cum += p;
            if u < cum {
                return ActionId(i);
            }
        }
        // u landed in the round-off gap above the final cumulative sum.
        let last = self
            .probs
            .iter()
            .rposition(|&p| p > 0.0)
            .unwrap_or(self.probs.len() - 1);
        ActionId(last)
    }
}

/// Draws `A ~ P_X`.
pub fn sample_action(strategy: &Simplex, rng: &mut RngStream) -> ActionId {
    strategy.sample(rng)
}

pub fn normalize(weights: &[f64]) -> Result<Simplex> {
    Simplex::normalize(weights)
}
