use nalgebra::{DMatrix, DVector};

use super::{Marginal, RewardModel};
use crate::error::{Error, Result};
use crate::simplex::ActionId;

/// Conjugate Gaussian belief over a weight vector `w` with `f(x) = phi(x)^T w`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearGaussianBelief {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    noise_var: f64,
    n_obs: usize,
}

impl LinearGaussianBelief {
    /// Zero-mean isotropic prior `N(0, prior_var I)`.
    pub fn isotropic(dim: usize, prior_var: f64, noise_var: f64) -> Result<Self> {
        Self::new(
            DVector::zeros(dim),
            DMatrix::identity(dim, dim) * prior_var,
            noise_var,
        )
    }

    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, noise_var: f64) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::ShapeMismatch {
                expected: mean.len(),
                got: cov.nrows(),
            });
        }
        if !(noise_var > 0.0) {
            return Err(Error::Config(format!("noise variance must be positive, got {noise_var}")));
        }
        Ok(Self {
            mean,
            cov,
            noise_var,
            n_obs: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    /// Sherman-Morrison form of
    /// `Sigma' = (Sigma^-1 + phi phi^T / s2)^-1`, `mu' = Sigma' (Sigma^-1 mu + y phi / s2)`.
    pub fn update(&mut self, phi: &DVector<f64>, y: f64) -> Result<()> {
        if phi.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                expected: self.dim(),
                got: phi.len(),
            });
        }
        if !y.is_finite() || phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("linear belief update"));
        }
        let s = &self.cov * phi;
        let quad = phi.dot(&s);
        let denom = self.noise_var + quad;
        if !(denom > 0.0) || !denom.is_finite() {
            return Err(Error::SingularCovariance {
                condition: condition_estimate(&self.cov),
            });
        }
        let resid = y - phi.dot(&self.mean);
        self.mean.axpy(resid / denom, &s, 1.0);
        self.cov.ger(-1.0 / denom, &s, &s, 1.0);
        // Keep the covariance exactly symmetric against round-off drift.
        let n = self.dim();
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (self.cov[(i, j)] + self.cov[(j, i)]);
                self.cov[(i, j)] = v;
                self.cov[(j, i)] = v;
            }
        }
        self.n_obs += 1;
        Ok(())
    }

    pub fn predict(&self, phi: &DVector<f64>) -> Marginal {
        let mean = phi.dot(&self.mean);
        let var = phi.dot(&(&self.cov * phi)).max(0.0);
        Marginal::new(mean, var.sqrt())
    }
}

fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Linear belief paired with a fixed feature table `phi(a, b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    belief: LinearGaussianBelief,
    n_a: usize,
    n_b: usize,
    features: Vec<DVector<f64>>,
}

impl LinearModel {
    /// `features[a * n_b + b] = phi(a, b)`.
    pub fn new(belief: LinearGaussianBelief, n_a: usize, n_b: usize, features: Vec<DVector<f64>>) -> Result<Self> {
        if features.len() != n_a * n_b {
            return Err(Error::ShapeMismatch {
                expected: n_a * n_b,
                got: features.len(),
            });
        }
        if let Some(bad) = features.iter().find(|f| f.len() != belief.dim()) {
            return Err(Error::ShapeMismatch {
                expected: belief.dim(),
                got: bad.len(),
            });
        }
        Ok(Self {
            belief,
            n_a,
            n_b,
            features,
        })
    }

    /// One-hot features `e_{a,b}`; equivalent to [`super::CountsBelief`].
    pub fn one_hot(n_a: usize, n_b: usize, prior_var: f64, noise_var: f64) -> Result<Self> {
        let d = n_a * n_b;
        let features = (0..d)
            .map(|i| {
                let mut e = DVector::zeros(d);
                e[i] = 1.0;
                e
            })
            .collect();
        Self::new(LinearGaussianBelief::isotropic(d, prior_var, noise_var)?, n_a, n_b, features)
    }

    pub fn belief(&self) -> &LinearGaussianBelief {
        &self.belief
    }

    pub fn feature(&self, a: ActionId, b: ActionId) -> &DVector<f64> {
        &self.features[a.0 * self.n_b + b.0]
    }
}

impl RewardModel for LinearModel {
    type Context = ActionId;

    fn n_actions(&self) -> usize {
        self.n_a
    }

    fn noise_var(&self) -> f64 {
        self.belief.noise_var
    }

    fn update(&mut self, a: ActionId, b: &ActionId, reward: f64) -> Result<()> {
        let a = ActionId::checked(a.0, self.n_a)?;
        let b = ActionId::checked(b.0, self.n_b)?;
        let phi = self.features[a.0 * self.n_b + b.0].clone();
        self.belief.update(&phi, reward)
    }

    fn predict(&self, a: ActionId, b: &ActionId) -> Result<Marginal> {
        Ok(self.belief.predict(self.feature(a, *b)))
    }
}
