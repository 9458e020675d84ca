use std::collections::BTreeMap;

use rayon::prelude::*;

use super::sgd::{mean_loss, run_sgd};
use super::{make_node_trainset, NodeTrainSet, TrainConfig};
use crate::compose::{LeveragedParams, SoftmaxParams};
use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::scalar::{dot, log_sum_exp, Scalar};
use crate::tree::ClassTree;

const LEVERAGED_KEY: u64 = 0x006c_6576_6572;

/// Starting point for leveraged training.
#[derive(Clone, Copy, Debug)]
pub enum LeveragedInit<'a, S> {
    /// Tie every node to the softmax weights.
    Softmax(&'a SoftmaxParams<S>),
    Leveraged(&'a LeveragedParams<S>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeFitReport<S> {
    pub node: usize,
    pub samples: usize,
    /// Mean node loss at the initial parameters (`None` for empty nodes).
    pub initial_loss: Option<S>,
    pub final_loss: Option<S>,
    pub epoch: usize,
}

#[derive(Clone, Debug)]
pub struct LeveragedFit<S> {
    pub params: LeveragedParams<S>,
    pub node_reports: Vec<NodeFitReport<S>>,
}

/// Node `node`'s classes in ascending order and their bit-1 memberships.
fn node_layout(tree: &ClassTree, node: usize) -> Result<(Vec<usize>, Vec<bool>)> {
    let n = tree.node(node)?;
    let in_one = n.subset().iter().map(|&c| n.branch_of(c) == Some(true)).collect();
    Ok((n.subset().to_vec(), in_one))
}

fn flatten<S: Scalar>(gammas: &BTreeMap<usize, Vec<S>>, classes: &[usize], node: usize) -> Result<Vec<S>> {
    let mut flat = Vec::new();
    for &c in classes {
        flat.extend_from_slice(gammas.get(&c).ok_or(Error::MissingClassParam { node, class: c })?);
    }
    Ok(flat)
}

fn scores_into<S: Scalar>(flat: &[S], dim: usize, x: &[S], scores: &mut [S]) {
    for (s, g) in scores.iter_mut().zip(flat.chunks(dim)) {
        *s = dot(g, x);
    }
}

/// Log-sum-exp over the scores whose membership flag equals `bit`.
fn branch_lse<S: Scalar>(scores: &[S], in_one: &[bool], bit: bool) -> S {
    let max = scores
        .iter()
        .zip(in_one)
        .filter(|(_, &b)| b == bit)
        .map(|(&s, _)| s)
        .fold(S::neg_infinity(), S::max);
    let sum: S = scores
        .iter()
        .zip(in_one)
        .filter(|(_, &b)| b == bit)
        .map(|(&s, _)| (s - max).exp())
        .sum();
    max + sum.ln()
}

fn sample_loss<S: Scalar>(flat: &[S], dim: usize, in_one: &[bool], x: &[S], bit: bool, scores: &mut [S]) -> S {
    scores_into(flat, dim, x, scores);
    log_sum_exp(scores) - branch_lse(scores, in_one, bit)
}

fn sample_grad<S: Scalar>(flat: &[S], dim: usize, in_one: &[bool], x: &[S], bit: bool, grad: &mut [S]) {
    let mut scores = vec![S::zero(); in_one.len()];
    scores_into(flat, dim, x, &mut scores);
    let all = log_sum_exp(&scores);
    let branch = branch_lse(&scores, in_one, bit);
    for ((g, &s), &b) in grad.chunks_mut(dim).zip(&scores).zip(in_one) {
        let mut r = (s - all).exp();
        if b == bit {
            r -= (s - branch).exp();
        }
        for (gv, &xv) in g.iter_mut().zip(x) {
            *gv += r * xv;
        }
    }
}

fn check_set<S: Scalar>(set: &NodeTrainSet<'_, S>, tree: &ClassTree) -> Result<()> {
    if set.data().num_classes() != tree.num_classes() {
        return Err(Error::ShapeMismatch(format!(
            "dataset has {} classes, tree has {}",
            set.data().num_classes(),
            tree.num_classes()
        )));
    }
    Ok(())
}

/// Summed node loss `Σ_n [log Σ_{S_i} e^{γ_j·x_n} − log Σ_{branch(y_n)} e^{γ_j·x_n}]`
/// and its gradient for every class in `S_i`.
pub fn node_loss_and_grads<S: Scalar>(
    gammas: &BTreeMap<usize, Vec<S>>,
    set: &NodeTrainSet<'_, S>,
    tree: &ClassTree,
) -> Result<(S, BTreeMap<usize, Vec<S>>)> {
    check_set(set, tree)?;
    let node = set.node();
    let (classes, in_one) = node_layout(tree, node)?;
    let flat = flatten(gammas, &classes, node)?;
    let dim = set.dim();
    let mut grad = vec![S::zero(); flat.len()];
    let mut scores = vec![S::zero(); classes.len()];
    let mut loss = S::zero();
    for i in 0..set.len() {
        let (x, bit) = (set.row(i), set.bits()[i]);
        loss += sample_loss(&flat, dim, &in_one, x, bit, &mut scores);
        sample_grad(&flat, dim, &in_one, x, bit, &mut grad);
    }
    let grads = classes.iter().copied().zip(grad.chunks(dim).map(<[S]>::to_vec)).collect();
    Ok((loss, grads))
}

/// Mean node loss over `set`.
pub fn node_loss<S: Scalar>(gammas: &BTreeMap<usize, Vec<S>>, set: &NodeTrainSet<'_, S>, tree: &ClassTree) -> Result<S> {
    check_set(set, tree)?;
    let node = set.node();
    let (classes, in_one) = node_layout(tree, node)?;
    let flat = flatten(gammas, &classes, node)?;
    Ok(mean_loss(set.len(), |i| {
        let mut scores = vec![S::zero(); classes.len()];
        sample_loss(&flat, set.dim(), &in_one, set.row(i), set.bits()[i], &mut scores)
    }))
}

type NodeFit<S> = (BTreeMap<usize, Vec<S>>, NodeFitReport<S>);

fn train_node<S: Scalar>(
    data: &LabeledDataset<S>,
    tree: &ClassTree,
    node: usize,
    init: &BTreeMap<usize, Vec<S>>,
    cfg: &TrainConfig,
) -> Result<NodeFit<S>> {
    let set = match make_node_trainset(data, tree, node) {
        Ok(set) => set,
        Err(Error::EmptyNodeSet { .. }) => {
            let report = NodeFitReport {
                node,
                samples: 0,
                initial_loss: None,
                final_loss: None,
                epoch: 0,
            };
            return Ok((init.clone(), report));
        }
        Err(e) => return Err(e),
    };
    let (classes, in_one) = node_layout(tree, node)?;
    let in_one = &in_one;
    let dim = set.dim();
    let mut rng = stream(cfg.seed, &[LEVERAGED_KEY, node as u64]);
    let out = run_sgd(
        flatten(init, &classes, node)?,
        set.len(),
        cfg,
        &mut rng,
        |w, i, grad| sample_grad(w, dim, in_one, set.row(i), set.bits()[i], grad),
        |w| {
            mean_loss(set.len(), |i| {
                let mut scores = vec![S::zero(); classes.len()];
                sample_loss(w, dim, in_one, set.row(i), set.bits()[i], &mut scores)
            })
        },
    );
    let gammas = classes
        .iter()
        .copied()
        .zip(out.params.chunks(dim).map(<[S]>::to_vec))
        .collect();
    let report = NodeFitReport {
        node,
        samples: set.len(),
        initial_loss: Some(out.initial_loss),
        final_loss: Some(out.final_loss),
        epoch: out.epoch,
    };
    Ok((gammas, report))
}

/// Trains every node's untied weights independently on its own samples.
///
/// Nodes run in parallel; each has its own shuffling stream, so the result
/// does not depend on scheduling. A node without samples keeps its init.
pub fn train_leveraged<S: Scalar>(
    data: &LabeledDataset<S>,
    tree: &ClassTree,
    init: LeveragedInit<'_, S>,
    cfg: &TrainConfig,
) -> Result<LeveragedFit<S>> {
    cfg.validate()?;
    let start = match init {
        LeveragedInit::Softmax(p) => LeveragedParams::from_softmax(p, tree)?,
        LeveragedInit::Leveraged(p) => LeveragedParams::new(tree, (0..p.num_nodes()).map(|i| p.node(i).clone()).collect())?,
    };
    if start.dim() != data.dim() {
        return Err(Error::ShapeMismatch(format!(
            "parameters have width {}, dataset rows {}",
            start.dim(),
            data.dim()
        )));
    }
    let results = (0..tree.num_nodes())
        .into_par_iter()
        .map(|j| train_node(data, tree, j, start.node(j), cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut params = start;
    let mut node_reports = Vec::with_capacity(results.len());
    for (j, (gammas, report)) in results.into_iter().enumerate() {
        *params.node_mut(j) = gammas;
        node_reports.push(report);
    }
    Ok(LeveragedFit { params, node_reports })
}
