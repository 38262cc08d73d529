use serde::{Deserialize, Serialize};

/// One noisy observation: the raw value and its image under the reward map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardSample {
    pub value: f64,
    pub clipped: f64,
}

/// Affine map from a raw payoff interval `[lo, hi]` onto `[0, 1]`, clipped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardMap {
    pub lo: f64,
    pub hi: f64,
}

impl RewardMap {
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(hi > lo, "reward map needs hi > lo");
        Self { lo, hi }
    }

    pub const IDENTITY: RewardMap = RewardMap { lo: 0.0, hi: 1.0 };

    /// `[-1, 1] -> [0, 1]` via `r -> (r + 1) / 2`.
    pub const SYMMETRIC_UNIT: RewardMap = RewardMap { lo: -1.0, hi: 1.0 };

    pub fn scale(&self) -> f64 {
        self.hi - self.lo
    }

    /// Affine image, not clipped. Used for noiseless means, which are already in range.
    pub fn affine(&self, y: f64) -> f64 {
        (y - self.lo) / (self.hi - self.lo)
    }

    pub fn apply(&self, y: f64) -> f64 {
        self.affine(y).clamp(0.0, 1.0)
    }

    pub fn sample(&self, y: f64) -> RewardSample {
        RewardSample {
            value: y,
            clipped: self.apply(y),
        }
    }

    /// Map seen by the other side of a zero-sum game (payoff negated).
    pub fn negated(&self) -> Self {
        Self {
            lo: -self.hi,
            hi: -self.lo,
        }
    }
}
