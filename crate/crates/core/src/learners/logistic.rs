use rayon::prelude::*;

use super::sgd::{mean_loss, run_sgd};
use super::{make_node_trainset, NodeTrainSet, TrainConfig, DEGENERATE_CLAMP};
use crate::compose::LogisticScorer;
use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::scalar::{dot, sigmoid, softplus, Scalar};
use crate::tree::ClassTree;

const BINARY_KEY: u64 = 0x6269_6e61_7279;
const OVA_KEY: u64 = 0x006f_7661;

/// A trained binary scorer and its training losses.
#[derive(Clone, Debug)]
pub struct BinaryFit<S> {
    pub scorer: LogisticScorer<S>,
    pub initial_loss: S,
    pub final_loss: S,
    /// Only one binary label was present; the scorer is constant.
    pub degenerate: bool,
}

/// `−log q(a)` for logit `z`: `softplus(z) − a·z`.
#[inline]
fn sample_loss<S: Scalar>(z: S, bit: bool) -> S {
    if bit {
        softplus(-z)
    } else {
        softplus(z)
    }
}

/// Summed binary log-loss over `set` and its gradient in `weights`.
pub fn binary_loss_and_grads<S: Scalar>(weights: &[S], set: &NodeTrainSet<'_, S>) -> (S, Vec<S>) {
    let mut grad = vec![S::zero(); weights.len()];
    let mut loss = S::zero();
    for i in 0..set.len() {
        let x = set.row(i);
        let z = dot(weights, x);
        let bit = set.bits()[i];
        loss += sample_loss(z, bit);
        let r = sigmoid(z) - if bit { S::one() } else { S::zero() };
        for (g, &xv) in grad.iter_mut().zip(x) {
            *g += r * xv;
        }
    }
    (loss, grad)
}

fn train_with_key<S: Scalar>(set: &NodeTrainSet<'_, S>, cfg: &TrainConfig, key: u64) -> Result<BinaryFit<S>> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(Error::EmptyNodeSet { node: set.node() });
    }
    let dim = set.dim();
    let ones = set.bits().iter().filter(|&&b| b).count();
    if ones == 0 || ones == set.len() {
        let eps = S::lit(DEGENERATE_CLAMP);
        let freq = S::from_count(ones) / S::from_count(set.len());
        let p = freq.max(eps).min(S::one() - eps);
        let scorer = LogisticScorer::constant(p, dim);
        let loss = mean_loss(set.len(), |i| sample_loss(dot(scorer.weights(), set.row(i)), set.bits()[i]));
        return Ok(BinaryFit {
            scorer,
            initial_loss: loss,
            final_loss: loss,
            degenerate: true,
        });
    }

    let mut rng = stream(cfg.seed, &[key, set.node() as u64]);
    let out = run_sgd(
        vec![S::zero(); dim],
        set.len(),
        cfg,
        &mut rng,
        |w, i, grad| {
            let x = set.row(i);
            let r = sigmoid(dot(w, x)) - if set.bits()[i] { S::one() } else { S::zero() };
            for (g, &xv) in grad.iter_mut().zip(x) {
                *g += r * xv;
            }
        },
        |w| mean_loss(set.len(), |i| sample_loss(dot(w, set.row(i)), set.bits()[i])),
    );
    Ok(BinaryFit {
        scorer: LogisticScorer::new(out.params),
        initial_loss: out.initial_loss,
        final_loss: out.final_loss,
        degenerate: false,
    })
}

/// Logistic regression by mini-batch SGD from zero weights.
///
/// With a single label present, returns a constant scorer at the clamped
/// empirical frequency.
pub fn train_binary_logistic<S: Scalar>(set: &NodeTrainSet<'_, S>, cfg: &TrainConfig) -> Result<BinaryFit<S>> {
    train_with_key(set, cfg, BINARY_KEY)
}

/// One class-vs-rest logistic scorer per class, trained independently.
pub fn train_ova<S: Scalar>(data: &LabeledDataset<S>, cfg: &TrainConfig) -> Result<Vec<BinaryFit<S>>> {
    let all: Vec<usize> = (0..data.len()).collect();
    (0..data.num_classes())
        .into_par_iter()
        .map(|c| {
            let bits = data.labels().iter().map(|&y| y == c).collect();
            let set = NodeTrainSet::from_parts(data, c, all.clone(), bits);
            train_with_key(&set, cfg, OVA_KEY)
        })
        .collect()
}

/// Black-box hierarchical training: one logistic scorer per node, each on
/// the samples reaching that node.
pub fn train_hierarchical<S: Scalar>(
    data: &LabeledDataset<S>,
    tree: &ClassTree,
    cfg: &TrainConfig,
) -> Result<Vec<BinaryFit<S>>> {
    (0..tree.num_nodes())
        .into_par_iter()
        .map(|j| train_binary_logistic(&make_node_trainset(data, tree, j)?, cfg))
        .collect()
}
