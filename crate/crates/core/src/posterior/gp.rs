use super::Marginal;
use crate::error::{Error, Result};

/// Updates between full refactorizations of the Cholesky factor.
pub const DEFAULT_REFACTOR_EVERY: usize = 512;

/// Negative predictive variances down to `-VARIANCE_CLAMP` are round-off and
/// clamp to zero; anything below is reported.
pub const VARIANCE_CLAMP: f64 = 1e-8;

pub trait Kernel: Clone + Send + Sync {
    type Input: Clone + Send + Sync;

    fn eval(&self, x: &Self::Input, y: &Self::Input) -> f64;
}

/// Gaussian-process posterior with a constant prior mean.
///
/// Keeps the lower Cholesky factor `L` of `K + noise_var I` in packed row-major
/// form and `w = L^-1 (y - m0)`, so a new observation appends one row in
/// `O(n^2)` and a prediction costs one forward solve.
#[derive(Clone, Debug)]
pub struct GpBelief<K: Kernel> {
    kernel: K,
    noise_var: f64,
    prior_mean: f64,
    inputs: Vec<K::Input>,
    targets: Vec<f64>,
    chol: Vec<f64>,
    w: Vec<f64>,
    refactor_every: usize,
    since_refactor: usize,
    history_cap: Option<usize>,
}

impl<K: Kernel> GpBelief<K> {
    pub fn new(kernel: K, noise_var: f64) -> Result<Self> {
        if !(noise_var > 0.0) {
            return Err(Error::Config(format!("noise variance must be positive, got {noise_var}")));
        }
        Ok(Self {
            kernel,
            noise_var,
            prior_mean: 0.0,
            inputs: Vec::new(),
            targets: Vec::new(),
            chol: Vec::new(),
            w: Vec::new(),
            refactor_every: DEFAULT_REFACTOR_EVERY,
            since_refactor: 0,
            history_cap: None,
        })
    }

    pub fn with_prior_mean(mut self, m0: f64) -> Self {
        self.prior_mean = m0;
        self
    }

    pub fn with_refactor_every(mut self, n: usize) -> Self {
        self.refactor_every = n.max(1);
        self
    }

    /// Bounds the stored history: once more than `cap` observations are held,
    /// the oldest are dropped down to `cap / 2` and the factor is rebuilt.
    /// This trades exactness for bounded cost; the posterior then forgets.
    pub fn with_history_cap(mut self, cap: usize) -> Self {
        self.history_cap = Some(cap.max(2));
        self
    }

    pub fn kernel(&self) -> &K {
        &self.kernel
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[K::Input] {
        &self.inputs
    }

    pub fn update(&mut self, x: K::Input, y: f64) -> Result<()> {
        if !y.is_finite() {
            return Err(Error::NonFinite("gp target"));
        }
        self.append(x, y)?;
        self.since_refactor += 1;
        if let Some(cap) = self.history_cap {
            if self.inputs.len() > cap {
                let drop = self.inputs.len() - cap / 2;
                self.inputs.drain(..drop);
                self.targets.drain(..drop);
                return self.refactor();
            }
        }
        if self.since_refactor >= self.refactor_every {
            self.refactor()?;
        }
        Ok(())
    }

    /// Recomputes the factor and `w` from the stored observations.
    pub fn refactor(&mut self) -> Result<()> {
        let inputs = std::mem::take(&mut self.inputs);
        let targets = std::mem::take(&mut self.targets);
        self.chol.clear();
        self.w.clear();
        for (x, y) in inputs.into_iter().zip(targets) {
            self.append(x, y)?;
        }
        self.since_refactor = 0;
        Ok(())
    }

    fn append(&mut self, x: K::Input, y: f64) -> Result<()> {
        let n = self.inputs.len();
        let k: Vec<f64> = self.inputs.iter().map(|xi| self.kernel.eval(xi, &x)).collect();
        let c = self.forward(&k);
        let kxx = self.kernel.eval(&x, &x) + self.noise_var;
        let d = kxx - c.iter().map(|v| v * v).sum::<f64>();
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::SingularCovariance {
                condition: kxx / d.abs().max(f64::MIN_POSITIVE),
            });
        }
        let lnn = d.sqrt();
        let wn = (y - self.prior_mean - c.iter().zip(&self.w).map(|(a, b)| a * b).sum::<f64>()) / lnn;
        self.chol.extend_from_slice(&c);
        self.chol.push(lnn);
        self.w.push(wn);
        self.inputs.push(x);
        self.targets.push(y);
        debug_assert_eq!(self.chol.len(), (n + 1) * (n + 2) / 2);
        Ok(())
    }

    fn row(&self, i: usize) -> &[f64] {
        let start = i * (i + 1) / 2;
        &self.chol[start..start + i + 1]
    }

    /// Solves `L v = b`.
    fn forward(&self, b: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(b.len());
        for (i, &bi) in b.iter().enumerate() {
            let row = self.row(i);
            let s: f64 = row[..i].iter().zip(&v).map(|(l, x)| l * x).sum();
            v.push((bi - s) / row[i]);
        }
        v
    }

    fn marginal(&self, prior_var: f64, mean_shift: f64, vv: f64) -> Result<Marginal> {
        let mut var = prior_var - vv;
        if var < 0.0 {
            if var < -VARIANCE_CLAMP {
                return Err(Error::NegativeVariance(var));
            }
            var = 0.0;
        }
        Ok(Marginal::new(self.prior_mean + mean_shift, var.sqrt()))
    }

    pub fn predict(&self, x: &K::Input) -> Result<Marginal> {
        let k: Vec<f64> = self.inputs.iter().map(|xi| self.kernel.eval(xi, x)).collect();
        let v = self.forward(&k);
        let shift = v.iter().zip(&self.w).map(|(a, b)| a * b).sum();
        let vv = v.iter().map(|a| a * a).sum();
        self.marginal(self.kernel.eval(x, x), shift, vv)
    }

    /// Batched prediction; forward solves for all queries share each pass over `L`.
    pub fn predict_many(&self, xs: &[K::Input]) -> Result<Vec<Marginal>> {
        let m = xs.len();
        let n = self.inputs.len();
        let mut v = vec![0.0; n * m];
        for (i, xi) in self.inputs.iter().enumerate() {
            for (r, x) in xs.iter().enumerate() {
                v[i * m + r] = self.kernel.eval(xi, x);
            }
        }
        let mut acc = vec![0.0; m];
        for i in 0..n {
            let row = self.row(i);
            acc.copy_from_slice(&v[i * m..(i + 1) * m]);
            for (j, &lij) in row[..i].iter().enumerate() {
                let vj = &v[j * m..(j + 1) * m];
                for (a, b) in acc.iter_mut().zip(vj) {
                    *a -= lij * b;
                }
            }
            let lii = row[i];
            for (r, a) in acc.iter().enumerate() {
                v[i * m + r] = a / lii;
            }
        }
        let mut shift = vec![0.0; m];
        let mut vv = vec![0.0; m];
        for i in 0..n {
            for r in 0..m {
                let x = v[i * m + r];
                shift[r] += x * self.w[i];
                vv[r] += x * x;
            }
        }
        xs.iter()
            .enumerate()
            .map(|(r, x)| self.marginal(self.kernel.eval(x, x), shift[r], vv[r]))
            .collect()
    }

    /// `0.5 log det(I + K / noise_var)` over the stored inputs.
    pub fn log_det_information(&self) -> f64 {
        let n = self.inputs.len();
        let sum_ln_diag: f64 = (0..n).map(|i| self.row(i)[i].ln()).sum();
        sum_ln_diag - 0.5 * n as f64 * self.noise_var.ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone, Debug)]
    struct Rbf;

    impl Kernel for Rbf {
        type Input = f64;
        fn eval(&self, x: &f64, y: &f64) -> f64 {
            (-(x - y).powi(2) / 2.0).exp()
        }
    }

    #[test]
    fn prior_with_no_data() {
        let gp = GpBelief::new(Rbf, 0.1).unwrap();
        let m = gp.predict(&0.3).unwrap();
        assert_eq!((m.mean, m.std), (0.0, 1.0));
        let gp = gp.with_prior_mean(0.5);
        assert_eq!(gp.predict(&0.3).unwrap().mean, 0.5);
    }

    #[test]
    fn one_observation_closed_form() {
        let mut gp = GpBelief::new(Rbf, 1.0).unwrap();
        gp.update(0.0, 1.0).unwrap();
        let m = gp.predict(&0.0).unwrap();
        assert!((m.mean - 0.5).abs() < 1e-15);
        assert!((m.variance() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn batched_matches_single() {
        let mut gp = GpBelief::new(Rbf, 0.05).unwrap();
        for i in 0..40 {
            let x = (i as f64 * 0.37).sin() * 3.0;
            gp.update(x, x.cos()).unwrap();
        }
        let qs = [-2.0, -0.5, 0.0, 1.1, 2.9];
        let many = gp.predict_many(&qs).unwrap();
        for (q, m) in qs.iter().zip(&many) {
            let s = gp.predict(q).unwrap();
            assert!((s.mean - m.mean).abs() < 1e-12);
            assert!((s.std - m.std).abs() < 1e-12);
        }
    }

    #[test]
    fn refactor_is_consistent() {
        let mut a = GpBelief::new(Rbf, 0.1).unwrap().with_refactor_every(3);
        let mut b = GpBelief::new(Rbf, 0.1).unwrap().with_refactor_every(10_000);
        for i in 0..20 {
            let x = i as f64 * 0.21;
            a.update(x, x * x).unwrap();
            b.update(x, x * x).unwrap();
        }
        let (ma, mb) = (a.predict(&1.3).unwrap(), b.predict(&1.3).unwrap());
        assert!((ma.mean - mb.mean).abs() < 1e-12 && (ma.std - mb.std).abs() < 1e-12);
    }

    #[test]
    fn history_cap_bounds_size() {
        let mut gp = GpBelief::new(Rbf, 0.1).unwrap().with_history_cap(10);
        for i in 0..37 {
            gp.update(i as f64, 0.0).unwrap();
            assert!(gp.len() <= 10);
        }
        assert_eq!(gp.inputs().last(), Some(&36.0));
    }

    #[test]
    fn nan_target_rejected() {
        let mut gp = GpBelief::new(Rbf, 0.1).unwrap();
        assert!(gp.update(0.0, f64::NAN).is_err());
        assert!(gp.is_empty());
    }
}
