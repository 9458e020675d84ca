//! Multiclass soft classifiers assembled from binary ones.
//!
//! Feature vectors carry a trailing constant-1 coordinate; every weight
//! vector has the same length as the feature vector, so intercepts are
//! ordinary weights.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::Categorical;
use crate::scalar::{dot, sigmoid, Scalar};
use crate::tree::{compose_into, ClassTree};

/// Maps a feature vector to the probability of the bit-1 / positive label.
pub trait BinaryScorer<S: Scalar>: Send + Sync {
    fn prob(&self, x: &[S]) -> S;
}

/// Maps a feature vector to a distribution over `num_classes()` labels.
pub trait MulticlassScorer<S: Scalar>: Send + Sync {
    fn num_classes(&self) -> usize;

    /// Writes the class probabilities for `x` into `out`.
    fn predict_into(&self, x: &[S], out: &mut [S]);

    fn posterior(&self, x: &[S]) -> Categorical<S> {
        let mut out = vec![S::zero(); self.num_classes()];
        self.predict_into(x, &mut out);
        Categorical::from_composed(out)
    }
}

impl<S: Scalar, T: BinaryScorer<S> + ?Sized> BinaryScorer<S> for &T {
    fn prob(&self, x: &[S]) -> S {
        (**self).prob(x)
    }
}

impl<S: Scalar, T: BinaryScorer<S> + ?Sized> BinaryScorer<S> for Box<T> {
    fn prob(&self, x: &[S]) -> S {
        (**self).prob(x)
    }
}

impl<S: Scalar, T: BinaryScorer<S> + ?Sized> BinaryScorer<S> for Arc<T> {
    fn prob(&self, x: &[S]) -> S {
        (**self).prob(x)
    }
}

impl<S: Scalar, T: MulticlassScorer<S> + ?Sized> MulticlassScorer<S> for &T {
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }
    fn predict_into(&self, x: &[S], out: &mut [S]) {
        (**self).predict_into(x, out)
    }
}

impl<S: Scalar, T: MulticlassScorer<S> + ?Sized> MulticlassScorer<S> for Box<T> {
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }
    fn predict_into(&self, x: &[S], out: &mut [S]) {
        (**self).predict_into(x, out)
    }
}

/// Posteriors for every row of a row-major `n × dim` feature matrix.
///
/// Rows are scored in parallel; each row is independent, so the output does
/// not depend on how the work is split.
pub fn predict_batch<S: Scalar, M: MulticlassScorer<S> + ?Sized>(
    scorer: &M,
    features: &[S],
    dim: usize,
) -> Vec<Categorical<S>> {
    features
        .par_chunks(dim)
        .map(|x| scorer.posterior(x))
        .collect()
}

/// `σ(w · x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticScorer<S> {
    weights: Vec<S>,
}

impl<S: Scalar> LogisticScorer<S> {
    pub fn new(weights: Vec<S>) -> Self {
        Self { weights }
    }

    /// Input-independent scorer at probability `p` for features of length
    /// `dim` whose last coordinate is the constant 1.
    pub fn constant(p: S, dim: usize) -> Self {
        let mut weights = vec![S::zero(); dim];
        weights[dim - 1] = (p / (S::one() - p)).ln();
        Self { weights }
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    /// The logit `w · x`.
    pub fn logit(&self, x: &[S]) -> S {
        dot(&self.weights, x)
    }
}

impl<S: Scalar> BinaryScorer<S> for LogisticScorer<S> {
    fn prob(&self, x: &[S]) -> S {
        sigmoid(self.logit(x))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantScorer<S>(pub S);

impl<S: Scalar> BinaryScorer<S> for ConstantScorer<S> {
    fn prob(&self, _x: &[S]) -> S {
        self.0
    }
}

/// One-vs-all: `Q(i) = q_i(x) / Σ_j q_j(x)`.
///
/// When every binary score is zero the output falls back to uniform and
/// [`OvaScorer::fallback_count`] is incremented.
#[derive(Debug)]
pub struct OvaScorer<B> {
    binaries: Vec<B>,
    fallbacks: AtomicU64,
}

impl<B: Clone> Clone for OvaScorer<B> {
    fn clone(&self) -> Self {
        Self {
            binaries: self.binaries.clone(),
            fallbacks: AtomicU64::new(self.fallback_count()),
        }
    }
}

impl<B> OvaScorer<B> {
    pub fn binaries(&self) -> &[B] {
        &self.binaries
    }

    /// Number of evaluations that hit the all-zero fallback.
    pub fn fallback_count(&self) -> u64 {
        self.fallbacks.load(Ordering::Relaxed)
    }
}

pub fn ova_compose<S: Scalar, B: BinaryScorer<S>>(binaries: Vec<B>) -> Result<OvaScorer<B>> {
    if binaries.len() < 2 {
        return Err(Error::InvalidK(binaries.len()));
    }
    Ok(OvaScorer {
        binaries,
        fallbacks: AtomicU64::new(0),
    })
}

/// OVA normalization of raw binary scores.
pub fn ova_normalize<S: Scalar>(scores: &[S], out: &mut [S]) -> bool {
    let total: S = scores.iter().copied().sum();
    if total > S::zero() {
        for (o, &s) in out.iter_mut().zip(scores) {
            *o = s / total;
        }
        true
    } else {
        let u = S::one() / S::from_count(scores.len());
        out.iter_mut().for_each(|o| *o = u);
        false
    }
}

impl<S: Scalar, B: BinaryScorer<S>> MulticlassScorer<S> for OvaScorer<B> {
    fn num_classes(&self) -> usize {
        self.binaries.len()
    }

    fn predict_into(&self, x: &[S], out: &mut [S]) {
        for (o, b) in out.iter_mut().zip(&self.binaries) {
            *o = b.prob(x);
        }
        let scores = out.to_vec();
        if !ova_normalize(&scores, out) {
            self.fallbacks.fetch_add(1, Ordering::Relaxed);
        }
    }
}

/// Hierarchical classifier: node scorers composed along codeword paths.
#[derive(Clone, Debug)]
pub struct HierarchicalScorer<B> {
    tree: ClassTree,
    nodes: Vec<B>,
}

impl<B> HierarchicalScorer<B> {
    pub fn tree(&self) -> &ClassTree {
        &self.tree
    }

    pub fn node_scorers(&self) -> &[B] {
        &self.nodes
    }

    /// Node success probabilities at `x`, aligned with the tree's nodes.
    pub fn node_probs_into<S: Scalar>(&self, x: &[S], out: &mut [S])
    where
        B: BinaryScorer<S>,
    {
        for (o, b) in out.iter_mut().zip(&self.nodes) {
            *o = b.prob(x);
        }
    }
}

pub fn hierarchical_compose<B>(tree: ClassTree, node_scorers: Vec<B>) -> Result<HierarchicalScorer<B>> {
    if node_scorers.len() != tree.num_nodes() {
        return Err(Error::AlignmentMismatch {
            expected: tree.num_nodes(),
            got: node_scorers.len(),
        });
    }
    Ok(HierarchicalScorer {
        tree,
        nodes: node_scorers,
    })
}

impl<S: Scalar, B: BinaryScorer<S>> MulticlassScorer<S> for HierarchicalScorer<B> {
    fn num_classes(&self) -> usize {
        self.tree.num_classes()
    }

    fn predict_into(&self, x: &[S], out: &mut [S]) {
        let mut values = vec![S::zero(); self.nodes.len()];
        self.node_probs_into(x, &mut values);
        compose_into(&self.tree, &values, out);
    }
}

fn check_vectors<S: Scalar>(vectors: &[Vec<S>]) -> Result<usize> {
    let dim = vectors.first().map_or(0, Vec::len);
    for v in vectors {
        if v.len() != dim {
            return Err(Error::LengthMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        if v.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidConfig("non-finite weight".into()));
        }
    }
    Ok(dim)
}

/// Softmax weights `β_0, …, β_{K−1}`, one per class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxParams<S> {
    betas: Vec<Vec<S>>,
}

impl<S: Scalar> SoftmaxParams<S> {
    pub fn new(betas: Vec<Vec<S>>) -> Result<Self> {
        if betas.len() < 2 {
            return Err(Error::InvalidK(betas.len()));
        }
        check_vectors(&betas)?;
        Ok(Self { betas })
    }

    pub fn zeros(k: usize, dim: usize) -> Result<Self> {
        Self::new(vec![vec![S::zero(); dim]; k])
    }

    pub fn betas(&self) -> &[Vec<S>] {
        &self.betas
    }

    pub fn num_classes(&self) -> usize {
        self.betas.len()
    }

    pub fn dim(&self) -> usize {
        self.betas[0].len()
    }
}

/// Class scores `β_j · x` turned into probabilities with max-subtraction.
fn softmax_of_scores<S: Scalar>(scores: &mut [S]) {
    let max = scores.iter().copied().fold(S::neg_infinity(), S::max);
    let mut total = S::zero();
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    for s in scores.iter_mut() {
        *s /= total;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxScorer<S> {
    params: SoftmaxParams<S>,
}

impl<S: Scalar> SoftmaxScorer<S> {
    pub fn params(&self) -> &SoftmaxParams<S> {
        &self.params
    }
}

pub fn softmax_scorer<S: Scalar>(params: SoftmaxParams<S>) -> SoftmaxScorer<S> {
    SoftmaxScorer { params }
}

impl<S: Scalar> MulticlassScorer<S> for SoftmaxScorer<S> {
    fn num_classes(&self) -> usize {
        self.params.num_classes()
    }

    fn predict_into(&self, x: &[S], out: &mut [S]) {
        for (o, b) in out.iter_mut().zip(&self.params.betas) {
            *o = dot(b, x);
        }
        softmax_of_scores(out);
    }
}

/// Binary scorer `Σ_{j∈S¹} exp(w_j·x) / Σ_{j∈S} exp(w_j·x)` over one
/// node's class set. Serves both projected softmax and leveraged nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeSoftmaxScorer<S> {
    classes: Vec<usize>,
    weights: Vec<Vec<S>>,
    in_one_branch: Vec<bool>,
}

impl<S: Scalar> NodeSoftmaxScorer<S> {
    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn weights(&self) -> &[Vec<S>] {
        &self.weights
    }
}

impl<S: Scalar> BinaryScorer<S> for NodeSoftmaxScorer<S> {
    fn prob(&self, x: &[S]) -> S {
        let scores: Vec<S> = self.weights.iter().map(|w| dot(w, x)).collect();
        let max = scores.iter().copied().fold(S::neg_infinity(), S::max);
        let mut one = S::zero();
        let mut total = S::zero();
        for (&s, &is_one) in scores.iter().zip(&self.in_one_branch) {
            let e = (s - max).exp();
            total += e;
            if is_one {
                one += e;
            }
        }
        one / total
    }
}

fn node_scorer_from<S: Scalar>(
    tree: &ClassTree,
    node: usize,
    mut lookup: impl FnMut(usize) -> Option<Vec<S>>,
) -> Result<NodeSoftmaxScorer<S>> {
    let n = tree.node(node)?;
    let mut weights = Vec::with_capacity(n.subset().len());
    let mut in_one_branch = Vec::with_capacity(n.subset().len());
    for &c in n.subset() {
        weights.push(lookup(c).ok_or(Error::MissingClassParam { node, class: c })?);
        in_one_branch.push(n.branch_of(c) == Some(true));
    }
    Ok(NodeSoftmaxScorer {
        classes: n.subset().to_vec(),
        weights,
        in_one_branch,
    })
}

/// The softmax model's conditional probability of node `node`'s bit-1 branch.
pub fn project_softmax_to_node<S: Scalar>(
    params: &SoftmaxParams<S>,
    tree: &ClassTree,
    node: usize,
) -> Result<NodeSoftmaxScorer<S>> {
    if params.num_classes() != tree.num_classes() {
        return Err(Error::LengthMismatch {
            expected: tree.num_classes(),
            got: params.num_classes(),
        });
    }
    node_scorer_from(tree, node, |c| params.betas.get(c).cloned())
}

/// Hierarchical scorer from all `K − 1` projected nodes of a softmax model.
/// Pointwise equal to the softmax scorer itself.
pub fn projected_softmax_scorer<S: Scalar>(
    params: &SoftmaxParams<S>,
    tree: &ClassTree,
) -> Result<HierarchicalScorer<NodeSoftmaxScorer<S>>> {
    let nodes = (0..tree.num_nodes())
        .map(|j| project_softmax_to_node(params, tree, j))
        .collect::<Result<Vec<_>>>()?;
    hierarchical_compose(tree.clone(), nodes)
}

/// Untied per-node weights `γ_{ij}` for every internal node `i` and class
/// `j ∈ S_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeveragedParams<S> {
    nodes: Vec<BTreeMap<usize, Vec<S>>>,
}

impl<S: Scalar> LeveragedParams<S> {
    /// Checks that node `i`'s keys are exactly `S_i` and vectors agree in
    /// length.
    pub fn new(tree: &ClassTree, nodes: Vec<BTreeMap<usize, Vec<S>>>) -> Result<Self> {
        if nodes.len() != tree.num_nodes() {
            return Err(Error::AlignmentMismatch {
                expected: tree.num_nodes(),
                got: nodes.len(),
            });
        }
        let mut dim = None;
        for (i, (gammas, node)) in nodes.iter().zip(tree.nodes()).enumerate() {
            for &c in node.subset() {
                if !gammas.contains_key(&c) {
                    return Err(Error::MissingClassParam { node: i, class: c });
                }
            }
            if gammas.len() != node.subset().len() {
                let extra = gammas.keys().find(|c| node.branch_of(**c).is_none()).copied();
                return Err(Error::InvalidConfig(format!(
                    "node {i} carries a parameter for class {} outside its subset",
                    extra.unwrap_or(usize::MAX)
                )));
            }
            let vectors: Vec<Vec<S>> = gammas.values().cloned().collect();
            let d = check_vectors(&vectors)?;
            if *dim.get_or_insert(d) != d {
                return Err(Error::LengthMismatch {
                    expected: dim.unwrap_or(d),
                    got: d,
                });
            }
        }
        Ok(Self { nodes })
    }

    /// Ties every node to the softmax weights: `γ_{ij} = β_j`.
    pub fn from_softmax(params: &SoftmaxParams<S>, tree: &ClassTree) -> Result<Self> {
        if params.num_classes() != tree.num_classes() {
            return Err(Error::LengthMismatch {
                expected: tree.num_classes(),
                got: params.num_classes(),
            });
        }
        let nodes = tree
            .nodes()
            .iter()
            .map(|n| {
                n.subset()
                    .iter()
                    .map(|&c| (c, params.betas[c].clone()))
                    .collect()
            })
            .collect();
        Ok(Self { nodes })
    }

    pub fn node(&self, i: usize) -> &BTreeMap<usize, Vec<S>> {
        &self.nodes[i]
    }

    pub(crate) fn node_mut(&mut self, i: usize) -> &mut BTreeMap<usize, Vec<S>> {
        &mut self.nodes[i]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn dim(&self) -> usize {
        self.nodes
            .first()
            .and_then(|m| m.values().next())
            .map_or(0, Vec::len)
    }
}

pub fn leveraged_node_scorer<S: Scalar>(
    params: &LeveragedParams<S>,
    tree: &ClassTree,
    node: usize,
) -> Result<NodeSoftmaxScorer<S>> {
    tree.node(node)?;
    let gammas = params.nodes.get(node).ok_or(Error::AlignmentMismatch {
        expected: tree.num_nodes(),
        got: params.nodes.len(),
    })?;
    node_scorer_from(tree, node, |c| gammas.get(&c).cloned())
}

/// The full leveraged hierarchical classifier.
pub fn leveraged_scorer<S: Scalar>(
    params: &LeveragedParams<S>,
    tree: &ClassTree,
) -> Result<HierarchicalScorer<NodeSoftmaxScorer<S>>> {
    let nodes = (0..tree.num_nodes())
        .map(|j| leveraged_node_scorer(params, tree, j))
        .collect::<Result<Vec<_>>>()?;
    hierarchical_compose(tree.clone(), nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{binary_divergence, kl_divergence, BinaryProb};
    use crate::tree::{build_balanced_tree, build_cova_tree, random_tree};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    fn consts(v: &[f64]) -> Vec<ConstantScorer<f64>> {
        v.iter().map(|&p| ConstantScorer(p)).collect()
    }

    #[test]
    fn ova_examples() {
        let x = [1.0];
        let q = ova_compose(consts(&[0.3, 0.7])).unwrap().posterior(&x);
        assert!(close(q.probs(), &[0.3, 0.7], 1e-15));
        let q = ova_compose(consts(&[0.2, 0.2, 0.2])).unwrap().posterior(&x);
        assert!(close(q.probs(), &[1.0 / 3.0; 3], 1e-15));

        let q = ova_compose(consts(&[0.6, 0.6])).unwrap().posterior(&x);
        assert!(close(q.probs(), &[0.5, 0.5], 1e-15));
        let p = Categorical::new(vec![0.8, 0.2]).unwrap();
        let lhs = kl_divergence(&p, &q).unwrap();
        let bp = |v: f64| BinaryProb::new(v).unwrap();
        let rhs = binary_divergence(bp(0.8), bp(0.6)).unwrap() + binary_divergence(bp(0.2), bp(0.6)).unwrap();
        assert!((lhs - 0.192_744_757_021_757_53).abs() < 1e-12);
        assert!((rhs - 0.426_311_508_563_770_04).abs() < 1e-12);
        assert!(lhs <= rhs);
    }

    #[test]
    fn ova_all_zero_falls_back_to_uniform() {
        let ova = ova_compose(consts(&[0.0, 0.0, 0.0, 0.0])).unwrap();
        let q = ova.posterior(&[1.0]);
        assert!(close(q.probs(), &[0.25; 4], 0.0));
        ova.posterior(&[2.0]);
        assert_eq!(ova.fallback_count(), 2);
        assert!(ova_compose(consts(&[0.5])).is_err());
    }

    #[test]
    fn ova_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let k = rng.random_range(2..10);
            let q: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
            let c: f64 = rng.random_range(0.01..1.0);
            let a = ova_compose(consts(&q)).unwrap().posterior(&[1.0]);
            let scaled: Vec<f64> = q.iter().map(|v| v * c).collect();
            let b = ova_compose(consts(&scaled)).unwrap().posterior(&[1.0]);
            assert!(close(a.probs(), b.probs(), 1e-14));
            assert_eq!(a.argmax(), b.argmax());
            assert!((a.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hierarchical_examples() {
        let t = build_balanced_tree(4, None).unwrap();
        let h = hierarchical_compose(t, consts(&[0.5; 3])).unwrap();
        assert!(close(h.posterior(&[3.0]).probs(), &[0.25; 4], 0.0));

        let t = build_cova_tree(3).unwrap();
        let h = hierarchical_compose(t.clone(), consts(&[0.4, 0.5])).unwrap();
        assert!(close(h.posterior(&[0.0]).probs(), &[0.4, 0.3, 0.3], 1e-15));

        assert!(matches!(
            hierarchical_compose(t, consts(&[0.4])),
            Err(Error::AlignmentMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn hierarchical_path_product() {
        // Q(1) = q_{S2} q_{S1} (1 − q_{S0}) for a tree indexed so that class
        // 1's path runs through nodes 2, 1, 0 with bits 1, 1, 0.
        let t = crate::tree::parse_tree("(((0 1) 2) (3 4))").unwrap();
        let qs = [0.7, 0.6, 0.2, 0.9];
        let h = hierarchical_compose(t.clone(), consts(&qs)).unwrap();
        let q = h.posterior(&[1.0]);
        let expected: f64 = t
            .path(1)
            .iter()
            .map(|&(j, b)| if b { qs[j] } else { 1.0 - qs[j] })
            .product();
        assert_eq!(t.codeword_string(1), "110");
        assert!((q.probs()[1] - 0.7 * 0.6 * (1.0 - 0.2)).abs() < 1e-15);
        assert!((q.probs()[1] - expected).abs() < 1e-15);
    }

    #[test]
    fn hierarchical_sums_to_one_for_arbitrary_nodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let k = rng.random_range(2..12);
            let t = random_tree(k, &mut rng).unwrap();
            let v: Vec<f64> = (0..k - 1).map(|_| rng.random()).collect();
            let h = hierarchical_compose(t, consts(&v)).unwrap();
            let s: f64 = h.posterior(&[0.0]).probs().iter().sum();
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn softmax_examples() {
        let sm = softmax_scorer(SoftmaxParams::<f64>::zeros(4, 3).unwrap());
        assert!(close(sm.posterior(&[5.0, -1.0, 1.0]).probs(), &[0.25; 4], 1e-15));

        let p = SoftmaxParams::<f64>::new(vec![vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let q = softmax_scorer(p).posterior(&[1.0, 1.0]);
        assert!((q.probs()[0] - 0.731_058_578_630_004_9).abs() < 1e-15);

        let big = SoftmaxParams::<f64>::new(vec![vec![1000.0], vec![999.0]]).unwrap();
        let q = softmax_scorer(big).posterior(&[1.0]);
        assert!(q.probs().iter().all(|p| p.is_finite()));
    }

    #[test]
    fn softmax_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let betas: Vec<Vec<f64>> = (0..5).map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let shift: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let shifted: Vec<Vec<f64>> = betas.iter().map(|b| b.iter().zip(&shift).map(|(x, s)| x + s).collect()).collect();
        let a = softmax_scorer(SoftmaxParams::new(betas).unwrap());
        let b = softmax_scorer(SoftmaxParams::new(shifted).unwrap());
        let x = [0.3, -1.2, 0.8, 1.0];
        assert!(close(a.posterior(&x).probs(), b.posterior(&x).probs(), 1e-14));
    }

    #[test]
    fn softmax_params_validation() {
        assert!(SoftmaxParams::new(vec![vec![0.0_f64; 2]]).is_err());
        assert!(SoftmaxParams::new(vec![vec![0.0_f64; 2], vec![0.0]]).is_err());
        assert!(SoftmaxParams::new(vec![vec![0.0_f64], vec![f64::NAN]]).is_err());
    }

    #[test]
    fn projection_examples() {
        let t = build_balanced_tree(5, None).unwrap();
        let p = SoftmaxParams::new(vec![vec![0.7, -0.2]; 5]).unwrap();
        for j in 0..t.num_nodes() {
            let s = project_softmax_to_node(&p, &t, j).unwrap();
            let n = &t.nodes()[j];
            let expected = n.one_branch().len() as f64 / n.subset().len() as f64;
            assert!((s.prob(&[0.4, 1.0]) - expected).abs() < 1e-15);
        }

        let t = build_cova_tree(2).unwrap();
        let p = SoftmaxParams::new(vec![vec![0.5, -1.0], vec![-0.25, 0.5]]).unwrap();
        let s = project_softmax_to_node(&p, &t, 0).unwrap();
        let x = [1.3, 1.0];
        let diff: f64 = (0.5 + 0.25) * 1.3 + (-1.0 - 0.5);
        assert!((s.prob(&x) - 1.0 / (1.0 + (-diff).exp())).abs() < 1e-15);

        assert!(matches!(project_softmax_to_node(&p, &t, 1), Err(Error::NodeOutOfRange { .. })));
    }

    #[test]
    fn projected_composition_equals_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let k = rng.random_range(2..11);
            let d = rng.random_range(1..6);
            let betas: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
            let params = SoftmaxParams::new(betas).unwrap();
            let t = random_tree(k, &mut rng).unwrap();
            let h = projected_softmax_scorer(&params, &t).unwrap();
            let sm = softmax_scorer(params);
            for _ in 0..20 {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
                assert!(close(h.posterior(&x).probs(), sm.posterior(&x).probs(), 1e-10));
            }
        }
    }

    #[test]
    fn leveraged_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let k = 6;
        let betas: Vec<Vec<f64>> = (0..k).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let params = SoftmaxParams::new(betas).unwrap();
        let t = random_tree(k, &mut rng).unwrap();
        let tied = LeveragedParams::from_softmax(&params, &t).unwrap();
        let x = [0.2, -0.7, 1.0];
        for j in 0..t.num_nodes() {
            let a = leveraged_node_scorer(&tied, &t, j).unwrap().prob(&x);
            let b = project_softmax_to_node(&params, &t, j).unwrap().prob(&x);
            assert_eq!(a, b);
        }

        // two-class node with equal weights
        let t2 = build_cova_tree(2).unwrap();
        let mut m = BTreeMap::new();
        m.insert(0, vec![0.3, 0.1]);
        m.insert(1, vec![0.3, 0.1]);
        let lp = LeveragedParams::new(&t2, vec![m]).unwrap();
        assert_eq!(leveraged_node_scorer(&lp, &t2, 0).unwrap().prob(&[4.0, 1.0]), 0.5);

        // a common shift inside one node leaves that node unchanged
        let mut shifted = tied.clone();
        for g in shifted.node_mut(0).values_mut() {
            g[0] += 1.5;
            g[2] -= 0.5;
        }
        let a = leveraged_node_scorer(&tied, &t, 0).unwrap().prob(&x);
        let b = leveraged_node_scorer(&shifted, &t, 0).unwrap().prob(&x);
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn leveraged_params_validation() {
        let t = build_cova_tree(3).unwrap();
        let mut m0 = BTreeMap::new();
        m0.insert(0, vec![0.0_f64]);
        m0.insert(1, vec![0.0]);
        let mut m1 = BTreeMap::new();
        m1.insert(1, vec![0.0]);
        m1.insert(2, vec![0.0]);
        assert!(matches!(
            LeveragedParams::new(&t, vec![m0.clone(), m1.clone()]),
            Err(Error::MissingClassParam { node: 0, class: 2 })
        ));
        m0.insert(2, vec![0.0]);
        assert!(LeveragedParams::new(&t, vec![m0.clone(), m1.clone()]).is_ok());
        m1.insert(0, vec![0.0]);
        assert!(LeveragedParams::new(&t, vec![m0, m1]).is_err());
    }

    #[test]
    fn constant_logistic_scorer() {
        let s = LogisticScorer::constant(0.25_f64, 3);
        assert!((s.prob(&[9.0, -4.0, 1.0]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn batch_prediction_matches_single() {
        let p = SoftmaxParams::new(vec![vec![1.0, 0.5], vec![-0.5, 0.2], vec![0.0, 0.0]]).unwrap();
        let sm = softmax_scorer(p);
        let feats: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin()).collect();
        let batch = predict_batch(&sm, &feats, 2);
        for (row, q) in feats.chunks(2).zip(&batch) {
            assert_eq!(q, &sm.posterior(row));
        }
    }
}
