use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::compose::{BinaryScorer, MulticlassScorer};
use crate::error::{Error, Result};
use crate::prob::Categorical;
use crate::rng::stream;
use crate::scalar::log_sum_exp;

/// Stream key for the training draw of a mixture.
pub const TRAIN_STREAM: u64 = 1;
/// Stream key for the test draw of a mixture.
pub const TEST_STREAM: u64 = 2;

const PARAM_KEY: u64 = 0x7061_7261_6d73;
const SAMPLE_KEY: u64 = 0x7361_6d70;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// Shared isotropic covariance `σ² I`.
    A,
    /// Per-class covariance `σ² I + alpha_scale · A_iᵀ A_i`.
    B,
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Scenario::A),
            "B" | "b" => Ok(Scenario::B),
            other => Err(Error::InvalidConfig(format!("unknown scenario {other:?}"))),
        }
    }
}

/// Equiprobable classes with Gaussian class-conditionals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    pub scenario: Scenario,
    pub classes: usize,
    pub dim: usize,
    pub sigma: f64,
    pub alpha_scale: f64,
    /// `classes` vectors of length `dim`.
    pub means: Vec<Vec<f64>>,
    /// Scenario B only: `classes` row-major `dim × dim` matrices `A_i`.
    pub factors: Option<Vec<Vec<f64>>>,
    pub seed: u64,
}

impl GaussianMixtureSpec {
    /// Draws means (and for scenario B the factors `A_i`) with i.i.d.
    /// standard normal entries from `seed`.
    pub fn draw(
        scenario: Scenario,
        classes: usize,
        dim: usize,
        sigma: f64,
        alpha_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidK(classes));
        }
        let mut rng = stream(seed, &[PARAM_KEY]);
        let mut normal_vec = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
        };
        let means = (0..classes).map(|_| normal_vec(dim)).collect();
        let factors = match scenario {
            Scenario::A => None,
            Scenario::B => Some((0..classes).map(|_| normal_vec(dim * dim)).collect()),
        };
        let spec = Self {
            scenario,
            classes,
            dim,
            sigma,
            alpha_scale,
            means,
            factors,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidK(self.classes));
        }
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dimension must be positive".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.alpha_scale >= 0.0 && self.alpha_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "alpha_scale must be nonnegative, got {}",
                self.alpha_scale
            )));
        }
        if self.means.len() != self.classes || self.means.iter().any(|m| m.len() != self.dim) {
            return Err(Error::ShapeMismatch("means must be classes × dim".into()));
        }
        match (&self.scenario, &self.factors) {
            (Scenario::A, None) => Ok(()),
            (Scenario::B, Some(f))
                if f.len() == self.classes && f.iter().all(|a| a.len() == self.dim * self.dim) =>
            {
                Ok(())
            }
            _ => Err(Error::ShapeMismatch(
                "scenario B needs classes × dim² factors; scenario A none".into(),
            )),
        }
    }

    /// Covariance matrix of class `i`.
    pub fn covariance(&self, i: usize) -> DMatrix<f64> {
        let d = self.dim;
        let mut cov = DMatrix::<f64>::identity(d, d) * (self.sigma * self.sigma);
        if let Some(factors) = &self.factors {
            let a = DMatrix::from_row_slice(d, d, &factors[i]);
            cov += a.transpose() * &a * self.alpha_scale;
        }
        cov
    }
}

/// A mixture ready for sampling and posterior evaluation.
#[derive(Clone, Debug)]
pub struct GaussianMixture {
    spec: GaussianMixtureSpec,
    /// Lower Cholesky factors (scenario B).
    chol: Option<Vec<DMatrix<f64>>>,
    /// `Σ_k log L_kk` per class.
    half_log_det: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(spec: GaussianMixtureSpec) -> Result<Self> {
        spec.validate()?;
        let (chol, half_log_det) = match spec.scenario {
            Scenario::A => (None, vec![spec.dim as f64 * spec.sigma.ln(); spec.classes]),
            Scenario::B => {
                let mut factors = Vec::with_capacity(spec.classes);
                let mut hld = Vec::with_capacity(spec.classes);
                for i in 0..spec.classes {
                    let ch = nalgebra::Cholesky::new(spec.covariance(i)).ok_or(Error::NonPDCovariance(i))?;
                    let l = ch.unpack();
                    hld.push(l.diagonal().iter().map(|v| v.ln()).sum());
                    factors.push(l);
                }
                (Some(factors), hld)
            }
        };
        Ok(Self {
            spec,
            chol,
            half_log_det,
        })
    }

    pub fn spec(&self) -> &GaussianMixtureSpec {
        &self.spec
    }

    /// `log N(x; μ_i, Σ_i)` up to the class-independent `−(d/2) log 2π`.
    fn log_density(&self, i: usize, x: &[f64]) -> f64 {
        let mu = &self.spec.means[i];
        let quad = match &self.chol {
            None => {
                let s2 = self.spec.sigma * self.spec.sigma;
                x.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / s2
            }
            Some(chol) => {
                let diff = DVector::from_iterator(x.len(), x.iter().zip(mu).map(|(a, b)| a - b));
                let z = chol[i]
                    .solve_lower_triangular(&diff)
                    .expect("Cholesky factor has a positive diagonal");
                z.norm_squared()
            }
        };
        -0.5 * quad - self.half_log_det[i]
    }

    /// Exact posterior under uniform priors; `x` excludes the intercept.
    pub fn posterior(&self, x: &[f64]) -> Result<Categorical<f64>> {
        if x.len() != self.spec.dim {
            return Err(Error::LengthMismatch {
                expected: self.spec.dim,
                got: x.len(),
            });
        }
        Ok(Categorical::from_weights(self.posterior_values(x)))
    }

    fn posterior_values(&self, x: &[f64]) -> Vec<f64> {
        let logs: Vec<f64> = (0..self.spec.classes).map(|i| self.log_density(i, x)).collect();
        let lse = log_sum_exp(&logs);
        logs.iter().map(|l| (l - lse).exp()).collect()
    }

    /// Draws `n` labeled samples from stream `stream_id`, with posteriors.
    ///
    /// Sample `i` depends only on `(seed, stream_id, i)`.
    pub fn sample(&self, n: usize, stream_id: u64) -> LabeledDataset<f64> {
        let d = self.spec.dim;
        let k = self.spec.classes;
        let rows: Vec<(usize, Vec<f64>, Vec<f64>)> = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(self.spec.seed, &[SAMPLE_KEY, stream_id, i]);
                let y = rng.random_range(0..k);
                let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let mu = &self.spec.means[y];
                let x: Vec<f64> = match &self.chol {
                    None => mu.iter().zip(&z).map(|(m, z)| m + self.spec.sigma * z).collect(),
                    Some(chol) => {
                        let lz = &chol[y] * DVector::from_vec(z);
                        mu.iter().zip(lz.iter()).map(|(m, v)| m + v).collect()
                    }
                };
                let post = self.posterior_values(&x);
                (y, x, post)
            })
            .collect();

        let mut features = Vec::with_capacity(n * (d + 1));
        let mut labels = Vec::with_capacity(n);
        let mut posteriors = Vec::with_capacity(n * k);
        for (y, x, post) in rows {
            features.extend_from_slice(&x);
            features.push(1.0);
            labels.push(y);
            posteriors.extend_from_slice(&post);
        }
        LabeledDataset::new(features, d + 1, labels, k, Some(posteriors))
            .expect("sampler produces consistent shapes")
    }
}

/// The Bayes classifier. Accepts rows with or without the intercept.
impl MulticlassScorer<f64> for GaussianMixture {
    fn num_classes(&self) -> usize {
        self.spec.classes
    }

    fn predict_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.posterior_values(&x[..self.spec.dim]));
    }
}

/// Exact one-vs-rest probability `P(Y = class | x)`.
#[derive(Clone, Debug)]
pub struct BayesClassScorer {
    mixture: Arc<GaussianMixture>,
    class: usize,
}

impl BinaryScorer<f64> for BayesClassScorer {
    fn prob(&self, x: &[f64]) -> f64 {
        self.mixture.posterior_values(&x[..self.mixture.spec.dim])[self.class]
    }
}

/// One exact one-vs-rest scorer per class.
pub fn bayes_class_scorers(mixture: &Arc<GaussianMixture>) -> Vec<BayesClassScorer> {
    (0..mixture.spec.classes)
        .map(|class| BayesClassScorer {
            mixture: Arc::clone(mixture),
            class,
        })
        .collect()
}

/// `n` samples from the training stream of `spec`.
pub fn sample_mixture(spec: &GaussianMixtureSpec, n: usize) -> Result<LabeledDataset<f64>> {
    if n == 0 {
        return Err(Error::InvalidConfig("sample count must be positive".into()));
    }
    Ok(GaussianMixture::new(spec.clone())?.sample(n, TRAIN_STREAM))
}

/// Exact class posterior at `x` (intercept excluded).
pub fn bayes_posterior(spec: &GaussianMixtureSpec, x: &[f64]) -> Result<Categorical<f64>> {
    GaussianMixture::new(spec.clone())?.posterior(x)
}
