//! Training: binary logistic regression, softmax regression, the untied
//! per-node ("leveraged") trainer, and a finite-difference gradient checker.
//!
//! All trainers run plain mini-batch SGD with a constant learning rate on
//! the mean log-loss of each batch. No regularization is applied.

mod gradcheck;
mod leveraged;
mod logistic;
mod posterior_fit;
mod sgd;
mod softmax;

pub use gradcheck::{
    check_gradients, check_node_loss_gradients, check_node_loss_with, check_softmax_gradients,
    relative_error, GradCheckReport,
};
pub use leveraged::{
    node_loss, node_loss_and_grads, train_leveraged, LeveragedFit, LeveragedInit, NodeFitReport,
};
pub use logistic::{
    binary_loss_and_grads, train_binary_logistic, train_hierarchical, train_ova, BinaryFit,
};
pub use posterior_fit::fit_log_linear_posteriors;
pub use sgd::SgdOutcome;
pub use softmax::{softmax_loss, softmax_loss_and_grads, train_softmax, train_softmax_from, SoftmaxFit};

use serde::{Deserialize, Serialize};

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tree::ClassTree;

/// Probability clamp for constant scorers fitted to single-label data.
pub const DEGENERATE_CLAMP: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Return the checkpoint (initial or end-of-epoch) with the lowest
    /// full-training-set loss instead of the last one.
    pub keep_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            batch_size: 64,
            epochs: 30,
            seed: 0,
            keep_best: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// The samples reaching one tree node, relabeled by branch.
///
/// Holds row indices into the parent dataset rather than copies.
#[derive(Clone, Debug)]
pub struct NodeTrainSet<'a, S> {
    data: &'a LabeledDataset<S>,
    node: usize,
    indices: Vec<usize>,
    bits: Vec<bool>,
}

impl<'a, S: Scalar> NodeTrainSet<'a, S> {
    /// A binary set over explicit rows, e.g. one class against the rest.
    pub fn from_parts(data: &'a LabeledDataset<S>, node: usize, indices: Vec<usize>, bits: Vec<bool>) -> Self {
        assert_eq!(indices.len(), bits.len());
        Self {
            data,
            node,
            indices,
            bits,
        }
    }

    pub fn data(&self) -> &'a LabeledDataset<S> {
        self.data
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Binary labels: `true` for samples in the bit-1 branch.
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn row(&self, i: usize) -> &'a [S] {
        self.data.row(self.indices[i])
    }

    pub fn label(&self, i: usize) -> usize {
        self.data.labels()[self.indices[i]]
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }
}

/// Samples with `y ∈ S_node`, labeled 1 when `y ∈ S_node^1`, in dataset order.
pub fn make_node_trainset<'a, S: Scalar>(
    data: &'a LabeledDataset<S>,
    tree: &ClassTree,
    node: usize,
) -> Result<NodeTrainSet<'a, S>> {
    if data.num_classes() != tree.num_classes() {
        return Err(Error::ShapeMismatch(format!(
            "dataset has {} classes, tree has {}",
            data.num_classes(),
            tree.num_classes()
        )));
    }
    let n = tree.node(node)?;
    let mut indices = Vec::new();
    let mut bits = Vec::new();
    for (i, &y) in data.labels().iter().enumerate() {
        if let Some(bit) = n.branch_of(y) {
            indices.push(i);
            bits.push(bit);
        }
    }
    if indices.is_empty() {
        return Err(Error::EmptyNodeSet { node });
    }
    Ok(NodeTrainSet {
        data,
        node,
        indices,
        bits,
    })
}
