//! Labeled datasets: synthetic Gaussian mixtures with exact posteriors,
//! MNIST IDX ingestion, and a binary on-disk container.

mod gaussian;
mod mnist;
mod storage;

pub use gaussian::{
    bayes_class_scorers, bayes_posterior, sample_mixture, BayesClassScorer, GaussianMixture, GaussianMixtureSpec, Scenario, TEST_STREAM,
    TRAIN_STREAM,
};
pub use mnist::{load_mnist_idx, parse_idx_images, parse_idx_labels, IdxImages};
pub use storage::{load_dataset, read_dataset, save_dataset, write_dataset};

use crate::error::{Error, Result};
use crate::prob::Categorical;
use crate::scalar::Scalar;

/// Feature rows with integer labels and optional exact posteriors.
///
/// Rows are stored row-major with a trailing constant-1 intercept
/// coordinate, so `dim()` is the raw feature dimension plus one.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset<S> {
    features: Vec<S>,
    dim: usize,
    labels: Vec<usize>,
    num_classes: usize,
    posteriors: Option<Vec<S>>,
}

impl<S: Scalar> LabeledDataset<S> {
    /// `features` is `labels.len() × dim` row-major and already includes the
    /// intercept column; `posteriors`, if present, is `labels.len() × K`.
    pub fn new(
        features: Vec<S>,
        dim: usize,
        labels: Vec<usize>,
        num_classes: usize,
        posteriors: Option<Vec<S>>,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidK(num_classes));
        }
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} feature values for {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: num_classes,
            });
        }
        if let Some(post) = &posteriors {
            if post.len() != labels.len() * num_classes {
                return Err(Error::ShapeMismatch(format!(
                    "{} posterior values for {} rows of {num_classes} classes",
                    post.len(),
                    labels.len()
                )));
            }
            for row in post.chunks(num_classes) {
                Categorical::new(row.to_vec())?;
            }
        }
        Ok(Self {
            features,
            dim,
            labels,
            num_classes,
            posteriors,
        })
    }

    /// Builds a dataset from raw rows, appending the intercept coordinate.
    pub fn from_raw_rows(
        rows: &[Vec<S>],
        labels: Vec<usize>,
        num_classes: usize,
        posteriors: Option<Vec<S>>,
    ) -> Result<Self> {
        let raw = rows.first().map_or(0, Vec::len);
        let mut features = Vec::with_capacity(rows.len() * (raw + 1));
        for r in rows {
            if r.len() != raw {
                return Err(Error::LengthMismatch {
                    expected: raw,
                    got: r.len(),
                });
            }
            features.extend_from_slice(r);
            features.push(S::one());
        }
        Self::new(features, raw + 1, labels, num_classes, posteriors)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Row width including the intercept.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Raw feature dimension `d` (intercept excluded).
    pub fn raw_dim(&self) -> usize {
        self.dim - 1
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &[S] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn has_posteriors(&self) -> bool {
        self.posteriors.is_some()
    }

    pub fn posterior_values(&self) -> Option<&[S]> {
        self.posteriors.as_deref()
    }

    pub fn posterior(&self, i: usize) -> Option<&[S]> {
        let k = self.num_classes;
        self.posteriors.as_ref().map(|p| &p[i * k..(i + 1) * k])
    }

    /// Exact posteriors as categoricals, one per row.
    pub fn posterior_categoricals(&self) -> Result<Vec<Categorical<S>>> {
        let post = self.posteriors.as_ref().ok_or(Error::MissingPosteriors)?;
        post.chunks(self.num_classes)
            .map(|r| Categorical::new(r.to_vec()))
            .collect()
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        let mut posteriors = self.posteriors.as_ref().map(|_| Vec::new());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
            if let (Some(out), Some(p)) = (posteriors.as_mut(), self.posterior(i)) {
                out.extend_from_slice(p);
            }
        }
        Self {
            features,
            dim: self.dim,
            labels,
            num_classes: self.num_classes,
            posteriors,
        }
    }

    /// The first `n` rows.
    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    pub fn cast<T: Scalar>(&self) -> LabeledDataset<T> {
        let conv = |v: &Vec<S>| v.iter().map(|x| T::lit(x.as_f64())).collect::<Vec<T>>();
        LabeledDataset {
            features: conv(&self.features),
            dim: self.dim,
            labels: self.labels.clone(),
            num_classes: self.num_classes,
            posteriors: self.posteriors.as_ref().map(conv),
        }
    }

    /// Number of samples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}
