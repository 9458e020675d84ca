//! Numerical checks of the regret bounds and decompositions.
//!
//! Randomized checks draw each trial from its own stream keyed by
//! `(seed, check, trial)`, run trials in parallel, and keep the sampled
//! inputs of the worst trial so any reported violation can be replayed
//! bit-exactly.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compose::{ova_normalize, projected_softmax_scorer, softmax_scorer, BinaryScorer, MulticlassScorer, SoftmaxParams};
use crate::datasets::LabeledDataset;
use crate::learners::GradCheckReport;
use crate::error::{Error, Result};
use crate::prob::{argmax, binary_divergence, kl_divergence, BinaryProb, Categorical};
use crate::rng::{derive_seed, stream, StreamRng};
use crate::tree::{build_balanced_tree, build_cova_tree, induce_node_probs, node_reach_probs, parse_tree, random_tree, serialize_tree, ClassTree};

/// Tolerance of the closed-form checks.
pub const EXACT_TOL: f64 = 1e-10;
/// Agreement required between the two COVA node-value formulas.
pub const FORMULA_TOL: f64 = 1e-12;
/// Tolerance of the per-sample averaged equality.
pub const SAMPLE_TOL: f64 = 1e-9;
/// Binary estimates are drawn from `(δ, 1 − δ)`.
pub const ESTIMATE_MARGIN: f64 = 1e-6;

const OVA_KEY: u64 = 1;
const TREE_KEY: u64 = 2;
const COVA_KEY: u64 = 3;
const DPI_KEY: u64 = 4;
const PROJECTION_KEY: u64 = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    /// `lhs ≤ rhs`; violation is `lhs − rhs − tolerance`.
    Inequality,
    /// `lhs = rhs`; violation is `|lhs − rhs|`.
    Equality,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub digest: String,
    pub lhs: f64,
    pub rhs: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub terms: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremCheckResult {
    pub name: String,
    pub kind: CheckKind,
    pub tolerance: f64,
    pub trials: usize,
    pub max_violation: f64,
    /// Largest `rhs − lhs` over trials.
    pub max_slack: f64,
    pub passed: bool,
    /// Trial with the largest violation and its serialized inputs.
    pub worst_trial: Option<usize>,
    pub worst_inputs: Option<serde_json::Value>,
    pub records: Vec<TrialRecord>,
}

impl TheoremCheckResult {
    /// `Err(ViolationFound)` carrying the worst inputs when the check failed.
    pub fn into_result(self) -> Result<Self> {
        if self.passed {
            return Ok(self);
        }
        Err(Error::ViolationFound {
            check: self.name.clone(),
            violation: self.max_violation,
            inputs: self.worst_inputs.as_ref().map(|v| v.to_string()).unwrap_or_default(),
        })
    }
}

/// Deliberate defects for negative controls.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    #[default]
    None,
    /// Pairs node `j` with the estimate of node `j + 1` (mod the node count).
    RotateNodeEstimates,
}

/// How random trees are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeSampler {
    /// Recursive uniform bipartition of the class set.
    Random,
    Cova,
    Balanced,
}

/// One binary-estimate instance: true posterior `p` and per-class `q_{A_i}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OvaInstance {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

/// Two distributions and a tree in its text form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeInstance {
    pub tree: String,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OvaTerms {
    /// `D(P ‖ Q^OVA)`.
    pub lhs: f64,
    /// `Σ_i d(p_i ‖ q_i)`.
    pub rhs: f64,
    pub f1: f64,
    pub f2: f64,
}

struct TrialEval {
    lhs: f64,
    rhs: f64,
    violation: f64,
    terms: BTreeMap<String, f64>,
}

fn bp(v: f64) -> Result<BinaryProb<f64>> {
    BinaryProb::new(v)
}

/// Hex digest of a serialized value.
fn digest(json: &str) -> String {
    let words: Vec<u64> = json
        .as_bytes()
        .chunks(8)
        .map(|c| {
            let mut b = [0u8; 8];
            b[..c.len()].copy_from_slice(c);
            u64::from_le_bytes(b)
        })
        .collect();
    format!("{:016x}", derive_seed(json.len() as u64, &words))
}

fn check_range(k_range: &RangeInclusive<usize>) -> Result<()> {
    if *k_range.start() < 2 || k_range.start() > k_range.end() {
        return Err(Error::InvalidConfig(format!(
            "class range {}..={} must start at 2 or more and be nonempty",
            k_range.start(),
            k_range.end()
        )));
    }
    Ok(())
}

/// Dirichlet(1, …, 1) draw via normalized exponentials; strictly positive.
fn sample_simplex(rng: &mut StreamRng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1).max(f64::MIN_POSITIVE)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

fn sample_tree(rng: &mut StreamRng, k: usize, sampler: TreeSampler) -> Result<ClassTree> {
    match sampler {
        TreeSampler::Random => random_tree(k, rng),
        TreeSampler::Cova => build_cova_tree(k),
        TreeSampler::Balanced => build_balanced_tree(k, None),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_trials<I, G, E>(
    name: &str,
    kind: CheckKind,
    tolerance: f64,
    trials: usize,
    seed: u64,
    key: u64,
    generate: G,
    evaluate: E,
) -> Result<TheoremCheckResult>
where
    I: Serialize + Send,
    G: Fn(&mut StreamRng) -> Result<I> + Sync,
    E: Fn(&I) -> Result<TrialEval> + Sync,
{
    if trials == 0 {
        return Err(Error::InvalidConfig("at least one trial is required".into()));
    }
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, &[key, t as u64]);
            let input = generate(&mut rng)?;
            let eval = evaluate(&input)?;
            let json = serde_json::to_value(&input).expect("instances serialize");
            Ok((json, eval))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut records = Vec::with_capacity(trials);
    let mut max_violation = f64::NEG_INFINITY;
    let mut max_slack = f64::NEG_INFINITY;
    let mut worst = 0;
    for (t, (json, eval)) in outcomes.iter().enumerate() {
        // NaN counts as a violation.
        if eval.violation > max_violation || eval.violation.is_nan() && !max_violation.is_nan() {
            max_violation = eval.violation;
            worst = t;
        }
        max_slack = max_slack.max(eval.rhs - eval.lhs);
        records.push(TrialRecord {
            trial: t,
            digest: digest(&json.to_string()),
            lhs: eval.lhs,
            rhs: eval.rhs,
            terms: eval.terms.clone(),
        });
    }
    let passed = match kind {
        CheckKind::Inequality => max_violation <= 0.0,
        CheckKind::Equality => max_violation <= tolerance,
    };
    Ok(TheoremCheckResult {
        name: name.to_string(),
        kind,
        tolerance,
        trials,
        max_violation,
        max_slack,
        passed,
        worst_trial: Some(worst),
        worst_inputs: Some(outcomes.into_iter().nth(worst).map(|(j, _)| j).expect("worst trial exists")),
        records,
    })
}

/// Both sides of the OVA bound and the two proof components
/// `F1 = Σ(1−p_i) log((1−p_i)/(1−q_i)) − (K−1) log((K−1)/(K(1−α)))` and
/// `F2 = K·d(1/K ‖ α)` with `α = Σ q_i / K`; `rhs − lhs = F1 + F2`.
pub fn ova_terms(inst: &OvaInstance) -> Result<OvaTerms> {
    let p = Categorical::new(inst.p.clone())?;
    let k = p.num_classes();
    if inst.q.len() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            got: inst.q.len(),
        });
    }
    let mut qn = vec![0.0; k];
    ova_normalize(&inst.q, &mut qn);
    let lhs = kl_divergence(&p, &Categorical::new(qn)?)?;
    let mut rhs = 0.0;
    for (&pi, &qi) in p.probs().iter().zip(&inst.q) {
        rhs += binary_divergence(bp(pi)?, bp(qi)?)?;
    }
    let kf = k as f64;
    let alpha = inst.q.iter().sum::<f64>() / kf;
    let mut f1 = 0.0;
    for (&pi, &qi) in p.probs().iter().zip(&inst.q) {
        if pi < 1.0 {
            f1 += (1.0 - pi) * ((1.0 - pi) / (1.0 - qi)).ln();
        }
    }
    f1 -= (kf - 1.0) * ((kf - 1.0) / (kf * (1.0 - alpha))).ln();
    let f2 = kf * binary_divergence(bp(1.0 / kf)?, bp(alpha)?)?;
    Ok(OvaTerms { lhs, rhs, f1, f2 })
}

/// `D(P ‖ Q^OVA) ≤ Σ_i d(p_i ‖ q_{A_i})`, with `F1, F2 ≥ 0` on every trial.
pub fn check_ova_bound(trials: usize, k_range: RangeInclusive<usize>, seed: u64) -> Result<TheoremCheckResult> {
    check_range(&k_range)?;
    run_trials(
        "ova-bound",
        CheckKind::Inequality,
        EXACT_TOL,
        trials,
        seed,
        OVA_KEY,
        |rng| {
            let k = rng.random_range(k_range.clone());
            let p = sample_simplex(rng, k);
            let q = (0..k).map(|_| rng.random_range(ESTIMATE_MARGIN..1.0 - ESTIMATE_MARGIN)).collect();
            Ok(OvaInstance { p, q })
        },
        |inst| {
            let t = ova_terms(inst)?;
            let violation = (t.lhs - t.rhs - EXACT_TOL).max(-t.f1 - EXACT_TOL).max(-t.f2 - EXACT_TOL);
            let terms = [("f1".to_string(), t.f1), ("f2".to_string(), t.f2)].into();
            Ok(TrialEval {
                lhs: t.lhs,
                rhs: t.rhs,
                violation,
                terms,
            })
        },
    )
}

fn tree_parts(inst: &TreeInstance) -> Result<(ClassTree, Categorical<f64>, Categorical<f64>)> {
    let tree = parse_tree(&inst.tree)?;
    let p = Categorical::new(inst.p.clone())?;
    let q = Categorical::new(inst.q.clone())?;
    if p.num_classes() != tree.num_classes() {
        return Err(Error::LengthMismatch {
            expected: tree.num_classes(),
            got: p.num_classes(),
        });
    }
    Ok((tree, p, q))
}

/// Per-node `(Pr(Y ∈ S_j), d(p_{S_j} ‖ q_{S_j}))`.
fn node_divergences(tree: &ClassTree, p: &Categorical<f64>, q: &Categorical<f64>, fault: Fault) -> Result<Vec<(f64, f64)>> {
    let weights = node_reach_probs(tree, p)?;
    let pn = induce_node_probs(tree, p)?;
    let qn = induce_node_probs(tree, q)?;
    let n = tree.num_nodes();
    (0..n)
        .map(|j| {
            let qj = match fault {
                Fault::None => qn.values()[j],
                Fault::RotateNodeEstimates => qn.values()[(j + 1) % n],
            };
            Ok((weights[j], binary_divergence(bp(pn.values()[j])?, bp(qj)?)?))
        })
        .collect()
}

/// `(D(P‖Q), Σ_j Pr(Y ∈ S_j)·d(p_{S_j} ‖ q_{S_j}))`.
pub fn tree_terms(inst: &TreeInstance, fault: Fault) -> Result<(f64, f64)> {
    let (tree, p, q) = tree_parts(inst)?;
    let lhs = kl_divergence(&p, &q)?;
    let rhs = node_divergences(&tree, &p, &q, fault)?
        .iter()
        .map(|&(w, d)| if w > 0.0 { w * d } else { 0.0 })
        .sum();
    Ok((lhs, rhs))
}

/// `(D(P‖Q), Σ_j d(p_{S_j} ‖ q_{S_j}))`, the unweighted sum.
pub fn dpi_terms(inst: &TreeInstance) -> Result<(f64, f64)> {
    let (tree, p, q) = tree_parts(inst)?;
    let lhs = kl_divergence(&p, &q)?;
    let rhs = node_divergences(&tree, &p, &q, Fault::None)?.iter().map(|&(_, d)| d).sum();
    Ok((lhs, rhs))
}

fn sample_tree_instance(rng: &mut StreamRng, k_range: &RangeInclusive<usize>, sampler: TreeSampler) -> Result<TreeInstance> {
    let k = rng.random_range(k_range.clone());
    let tree = sample_tree(rng, k, sampler)?;
    let p = sample_simplex(rng, k);
    let q = sample_simplex(rng, k);
    Ok(TreeInstance {
        tree: serialize_tree(&tree),
        p,
        q,
    })
}

fn equality(lhs: f64, rhs: f64) -> TrialEval {
    TrialEval {
        lhs,
        rhs,
        violation: (lhs - rhs).abs(),
        terms: BTreeMap::new(),
    }
}

/// Exact tree decomposition `D(P‖Q) = Σ_j Pr(Y ∈ S_j)·d(p_{S_j} ‖ q_{S_j})`.
pub fn check_tree_decomposition(
    trials: usize,
    k_range: RangeInclusive<usize>,
    sampler: TreeSampler,
    seed: u64,
) -> Result<TheoremCheckResult> {
    check_tree_decomposition_with(trials, k_range, sampler, seed, Fault::None)
}

/// As [`check_tree_decomposition`], with an injected fault.
pub fn check_tree_decomposition_with(
    trials: usize,
    k_range: RangeInclusive<usize>,
    sampler: TreeSampler,
    seed: u64,
    fault: Fault,
) -> Result<TheoremCheckResult> {
    check_range(&k_range)?;
    run_trials(
        "tree-decomposition",
        CheckKind::Equality,
        EXACT_TOL,
        trials,
        seed,
        TREE_KEY,
        |rng| sample_tree_instance(rng, &k_range, sampler),
        |inst| {
            let (lhs, rhs) = tree_terms(inst, fault)?;
            Ok(equality(lhs, rhs))
        },
    )
}

/// `D(P‖Q) ≤ Σ_j d(p_{S_j} ‖ q_{S_j})` on random trees.
pub fn check_dpi_loose_bound(trials: usize, k_range: RangeInclusive<usize>, seed: u64) -> Result<TheoremCheckResult> {
    check_range(&k_range)?;
    run_trials(
        "dpi-loose-bound",
        CheckKind::Inequality,
        EXACT_TOL,
        trials,
        seed,
        DPI_KEY,
        |rng| sample_tree_instance(rng, &k_range, TreeSampler::Random),
        |inst| {
            let (lhs, rhs) = dpi_terms(inst)?;
            Ok(TrialEval {
                lhs,
                rhs,
                violation: lhs - rhs - EXACT_TOL,
                terms: BTreeMap::new(),
            })
        },
    )
}

/// COVA tail weights `Pr(Y ≥ i)` and conditionals `p_i / Pr(Y ≥ i)` for
/// `i = 0..K−2`, straight from the class probabilities.
pub fn cova_conditionals(p: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = p.len();
    let mut tails = vec![0.0; k];
    let mut acc = 0.0;
    for i in (0..k).rev() {
        acc += p[i];
        tails[i] = acc;
    }
    let weights = tails[..k - 1].to_vec();
    let cond = (0..k - 1).map(|i| if tails[i] > 0.0 { p[i] / tails[i] } else { 0.0 }).collect();
    (weights, cond)
}

/// `(D(P‖Q), Σ_i Pr(Y ≥ i)·d(p^cond_i ‖ q^cond_i))` via the tail formulas,
/// after checking them against the tree-induced node values.
pub fn cova_terms(p: &[f64], q: &[f64]) -> Result<(f64, f64)> {
    let pc = Categorical::new(p.to_vec())?;
    let qc = Categorical::new(q.to_vec())?;
    let tree = build_cova_tree(pc.num_classes())?;
    let (w, pcond) = cova_conditionals(pc.probs());
    let (_, qcond) = cova_conditionals(qc.probs());
    let induced_p = induce_node_probs(&tree, &pc)?;
    let induced_q = induce_node_probs(&tree, &qc)?;
    let gap = pcond
        .iter()
        .zip(induced_p.values())
        .chain(qcond.iter().zip(induced_q.values()))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if gap > FORMULA_TOL {
        return Err(Error::FormulaMismatch {
            check: "cova-decomposition".into(),
            gap,
        });
    }
    let lhs = kl_divergence(&pc, &qc)?;
    let mut rhs = 0.0;
    for i in 0..w.len() {
        if w[i] > 0.0 {
            rhs += w[i] * binary_divergence(bp(pcond[i])?, bp(qcond[i])?)?;
        }
    }
    Ok((lhs, rhs))
}

/// The COVA decomposition on random instances.
pub fn check_cova_decomposition(trials: usize, k_range: RangeInclusive<usize>, seed: u64) -> Result<TheoremCheckResult> {
    check_range(&k_range)?;
    run_trials(
        "cova-decomposition",
        CheckKind::Equality,
        EXACT_TOL,
        trials,
        seed,
        COVA_KEY,
        |rng| sample_tree_instance(rng, &k_range, TreeSampler::Cova),
        |inst| {
            let (lhs, rhs) = cova_terms(&inst.p, &inst.q)?;
            Ok(equality(lhs, rhs))
        },
    )
}

/// Random softmax weights, a tree, and feature vectors (intercept last).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionInstance {
    pub tree: String,
    pub betas: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
}

/// Largest per-class gap between the softmax scorer and the hierarchical
/// composition of its projected node scorers.
pub fn projection_gap(inst: &ProjectionInstance) -> Result<f64> {
    let tree = parse_tree(&inst.tree)?;
    let params = SoftmaxParams::new(inst.betas.clone())?;
    let direct = softmax_scorer(params.clone());
    let composed = projected_softmax_scorer(&params, &tree)?;
    let k = params.num_classes();
    let (mut a, mut b) = (vec![0.0; k], vec![0.0; k]);
    let mut gap = 0.0f64;
    for x in &inst.inputs {
        direct.predict_into(x, &mut a);
        composed.predict_into(x, &mut b);
        for (u, v) in a.iter().zip(&b) {
            gap = gap.max((u - v).abs());
        }
    }
    Ok(gap)
}

/// Projected node scorers compose back to the softmax scorer, on random
/// weights, trees and inputs.
pub fn check_projection_identity(
    trials: usize,
    inputs_per_trial: usize,
    k_range: RangeInclusive<usize>,
    seed: u64,
) -> Result<TheoremCheckResult> {
    check_range(&k_range)?;
    run_trials(
        "projection-identity",
        CheckKind::Equality,
        EXACT_TOL,
        trials,
        seed,
        PROJECTION_KEY,
        |rng| {
            let k = rng.random_range(k_range.clone());
            let dim = rng.random_range(2..=6);
            let tree = random_tree(k, rng)?;
            let mut normal = |scale: f64| scale * rng.sample::<f64, _>(StandardNormal);
            let betas = (0..k).map(|_| (0..dim).map(|_| normal(2.0)).collect()).collect();
            let inputs = (0..inputs_per_trial)
                .map(|_| (0..dim).map(|j| if j + 1 == dim { 1.0 } else { normal(1.0) }).collect())
                .collect();
            Ok(ProjectionInstance {
                tree: serialize_tree(&tree),
                betas,
                inputs,
            })
        },
        |inst| {
            let gap = projection_gap(inst)?;
            Ok(TrialEval {
                lhs: gap,
                rhs: 0.0,
                violation: gap,
                terms: BTreeMap::new(),
            })
        },
    )
}

/// A gradient check as a check result: violation `max_rel_error − tol`.
pub fn gradient_check_result(name: &str, report: &GradCheckReport) -> TheoremCheckResult {
    TheoremCheckResult {
        name: name.to_string(),
        kind: CheckKind::Inequality,
        tolerance: report.tol,
        trials: report.trials,
        max_violation: report.max_rel_error - report.tol,
        max_slack: report.tol - report.max_rel_error,
        passed: report.passed,
        worst_trial: None,
        worst_inputs: None,
        records: Vec::new(),
    }
}

fn require_posteriors(data: &LabeledDataset<f64>) -> Result<Vec<Categorical<f64>>> {
    if !data.has_posteriors() {
        return Err(Error::MissingPosteriors);
    }
    data.posterior_categoricals()
}

#[derive(Serialize)]
struct DatasetSummary {
    samples: usize,
    classes: usize,
    dim: usize,
    tree: Option<String>,
}

fn dataset_result(
    name: &str,
    kind: CheckKind,
    tolerance: f64,
    summary: DatasetSummary,
    eval: TrialEval,
) -> TheoremCheckResult {
    let json = serde_json::to_value(&summary).expect("summary serializes");
    let passed = match kind {
        CheckKind::Inequality => eval.violation <= 0.0,
        CheckKind::Equality => eval.violation <= tolerance,
    };
    TheoremCheckResult {
        name: name.to_string(),
        kind,
        tolerance,
        trials: 1,
        max_violation: eval.violation,
        max_slack: eval.rhs - eval.lhs,
        passed,
        worst_trial: Some(0),
        records: vec![TrialRecord {
            trial: 0,
            digest: digest(&json.to_string()),
            lhs: eval.lhs,
            rhs: eval.rhs,
            terms: eval.terms,
        }],
        worst_inputs: Some(json),
    }
}

/// Empirical conditional decomposition: the mean of `D(P_{Y|x} ‖ Q_{Y|x})`
/// against `Σ_j ŵ_j · r̂_j`, where `ŵ_j` is the mean of `Pr(Y ∈ S_j | x)` and
/// `r̂_j` the `Pr(Y ∈ S_j | x)/ŵ_j`-weighted mean of the node divergence.
pub fn check_conditional_decomposition<M: MulticlassScorer<f64> + ?Sized>(
    data: &LabeledDataset<f64>,
    tree: &ClassTree,
    scorer: &M,
) -> Result<TheoremCheckResult> {
    let posts = require_posteriors(data)?;
    if tree.num_classes() != data.num_classes() || scorer.num_classes() != data.num_classes() {
        return Err(Error::ShapeMismatch(format!(
            "dataset has {} classes, tree {}, scorer {}",
            data.num_classes(),
            tree.num_classes(),
            scorer.num_classes()
        )));
    }
    let per_sample = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let q = scorer.posterior(data.row(i));
            let lhs = kl_divergence(&posts[i], &q)?;
            let nodes = node_divergences(tree, &posts[i], &q, Fault::None)?;
            Ok((lhs, nodes))
        })
        .collect::<Result<Vec<_>>>()?;
    let m = data.len() as f64;
    let n = tree.num_nodes();
    let mut lhs = 0.0;
    let mut weight_sums = vec![0.0; n];
    let mut weighted = vec![0.0; n];
    for (l, nodes) in &per_sample {
        lhs += l;
        for (j, &(w, d)) in nodes.iter().enumerate() {
            weight_sums[j] += w;
            if w > 0.0 {
                weighted[j] += w * d;
            }
        }
    }
    lhs /= m;
    let mut terms = BTreeMap::new();
    let mut rhs = 0.0;
    for j in 0..n {
        let w_hat = weight_sums[j] / m;
        let r_hat = if weight_sums[j] > 0.0 { weighted[j] / weight_sums[j] } else { 0.0 };
        rhs += w_hat * r_hat;
        terms.insert(format!("node{j:03}.weight"), w_hat);
        terms.insert(format!("node{j:03}.regret"), r_hat);
    }
    let mut eval = equality(lhs, rhs);
    eval.terms.extend(terms);
    Ok(dataset_result(
        "conditional-decomposition",
        CheckKind::Equality,
        SAMPLE_TOL,
        DatasetSummary {
            samples: data.len(),
            classes: data.num_classes(),
            dim: data.dim(),
            tree: Some(serialize_tree(tree)),
        },
        eval,
    ))
}

/// Excess zero-one error of the OVA classifier against
/// `sqrt(2 Σ_i r̂_i)`, with `r̂_i` the mean of `d(p_{A_i|x} ‖ q_{A_i|x})`.
///
/// Errors are counted against the realized labels, so the check allows a
/// statistical margin of `3/√M`.
pub fn check_pinsker_zero_one<B: BinaryScorer<f64>>(data: &LabeledDataset<f64>, binaries: &[B]) -> Result<TheoremCheckResult> {
    let posts = require_posteriors(data)?;
    let k = data.num_classes();
    if binaries.len() != k {
        return Err(Error::AlignmentMismatch {
            expected: k,
            got: binaries.len(),
        });
    }
    let per_sample = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let x = data.row(i);
            let scores: Vec<f64> = binaries.iter().map(|b| b.prob(x)).collect();
            let mut q = vec![0.0; k];
            ova_normalize(&scores, &mut q);
            let p = posts[i].probs();
            let mut regrets = Vec::with_capacity(k);
            for (&pi, &si) in p.iter().zip(&scores) {
                // A saturated estimate against an interior posterior has
                // infinite regret, which makes the bound vacuous.
                regrets.push(binary_divergence(bp(pi)?, bp(si)?).unwrap_or(f64::INFINITY));
            }
            Ok((argmax(&q), argmax(p), regrets))
        })
        .collect::<Result<Vec<_>>>()?;
    let m = data.len() as f64;
    let mut errors_q = 0usize;
    let mut errors_bayes = 0usize;
    let mut regret_sums = vec![0.0; k];
    for ((yq, yb, regrets), &y) in per_sample.iter().zip(data.labels()) {
        errors_q += usize::from(*yq != y);
        errors_bayes += usize::from(*yb != y);
        for (s, r) in regret_sums.iter_mut().zip(regrets) {
            *s += r;
        }
    }
    let lhs = (errors_q as f64 - errors_bayes as f64) / m;
    let total_regret: f64 = regret_sums.iter().map(|s| s / m).sum();
    let rhs = (2.0 * total_regret).sqrt();
    let tolerance = 3.0 / m.sqrt();
    let mut terms = BTreeMap::new();
    terms.insert("error".to_string(), errors_q as f64 / m);
    terms.insert("bayes_error".to_string(), errors_bayes as f64 / m);
    terms.insert("binary_regret_sum".to_string(), total_regret);
    Ok(dataset_result(
        "pinsker-zero-one",
        CheckKind::Inequality,
        tolerance,
        DatasetSummary {
            samples: data.len(),
            classes: k,
            dim: data.dim(),
            tree: None,
        },
        TrialEval {
            lhs,
            rhs,
            violation: lhs - rhs - tolerance,
            terms,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compose::{ConstantScorer, LogisticScorer};
    use crate::datasets::{bayes_class_scorers, GaussianMixture, GaussianMixtureSpec, Scenario};
    use std::sync::Arc;

    #[test]
    fn ova_exact_estimates_give_zero() {
        let t = ova_terms(&OvaInstance {
            p: vec![0.2, 0.5, 0.3],
            q: vec![0.2, 0.5, 0.3],
        })
        .unwrap();
        assert!(t.lhs.abs() < 1e-15 && t.rhs.abs() < 1e-15);
        assert!(t.f1.abs() < 1e-12 && t.f2.abs() < 1e-12);
    }

    #[test]
    fn ova_two_class_example() {
        let t = ova_terms(&OvaInstance {
            p: vec![0.8, 0.2],
            q: vec![0.6, 0.6],
        })
        .unwrap();
        assert!((t.lhs - 0.192_744_757_021_757_53).abs() < 1e-12);
        assert!((t.rhs - 0.426_311_508_563_770_04).abs() < 1e-12);
        assert!((t.rhs - t.lhs - t.f1 - t.f2).abs() < 1e-12);
    }

    #[test]
    fn ova_bound_holds_on_random_instances() {
        let r = check_ova_bound(1000, 2..=10, 11).unwrap();
        assert!(r.passed, "{:?}", r.max_violation);
        assert_eq!(r.records.len(), 1000);
        for rec in &r.records {
            assert!(rec.terms["f1"] >= -1e-10 && rec.terms["f2"] >= -1e-10);
            assert!((rec.rhs - rec.lhs - rec.terms["f1"] - rec.terms["f2"]).abs() < 1e-9);
        }
    }

    #[test]
    fn tree_decomposition_example() {
        let (lhs, rhs) = tree_terms(
            &TreeInstance {
                tree: serialize_tree(&build_cova_tree(3).unwrap()),
                p: vec![0.5, 0.3, 0.2],
                q: vec![0.4, 0.3, 0.3],
            },
            Fault::None,
        )
        .unwrap();
        assert!((lhs - 0.030_478_754_035_472_025).abs() < 1e-15);
        assert!((lhs - rhs).abs() < 1e-15);
        let (l2, r2) = tree_terms(
            &TreeInstance {
                tree: "((0 1) 2)".into(),
                p: vec![0.5, 0.3, 0.2],
                q: vec![0.5, 0.3, 0.2],
            },
            Fault::None,
        )
        .unwrap();
        assert_eq!((l2, r2), (0.0, 0.0));
    }

    #[test]
    fn tree_decomposition_holds_on_random_instances() {
        for sampler in [TreeSampler::Random, TreeSampler::Cova, TreeSampler::Balanced] {
            let r = check_tree_decomposition(1000, 2..=10, sampler, 12).unwrap();
            assert!(r.passed, "{sampler:?}: {}", r.max_violation);
        }
    }

    #[test]
    fn rotated_estimates_are_caught() {
        let r = check_tree_decomposition_with(200, 3..=10, TreeSampler::Random, 12, Fault::RotateNodeEstimates).unwrap();
        assert!(!r.passed);
        assert!(matches!(r.into_result(), Err(Error::ViolationFound { .. })));
    }

    #[test]
    fn violations_replay_bit_exactly() {
        let r = check_tree_decomposition_with(50, 3..=10, TreeSampler::Random, 5, Fault::RotateNodeEstimates).unwrap();
        let worst = r.worst_trial.unwrap();
        let text = r.worst_inputs.as_ref().unwrap().to_string();
        let inst: TreeInstance = serde_json::from_str(&text).unwrap();
        let (lhs, rhs) = tree_terms(&inst, Fault::RotateNodeEstimates).unwrap();
        assert_eq!(lhs.to_bits(), r.records[worst].lhs.to_bits());
        assert_eq!(rhs.to_bits(), r.records[worst].rhs.to_bits());

        let r = check_ova_bound(20, 2..=6, 5).unwrap();
        let inst: OvaInstance = serde_json::from_value(r.worst_inputs.clone().unwrap()).unwrap();
        assert_eq!(ova_terms(&inst).unwrap().lhs.to_bits(), r.records[r.worst_trial.unwrap()].lhs.to_bits());
    }

    #[test]
    fn checks_are_deterministic() {
        let a = check_cova_decomposition(100, 2..=8, 3).unwrap();
        let b = check_cova_decomposition(100, 2..=8, 3).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn cova_examples() {
        let (w, c) = cova_conditionals(&[0.2; 5]);
        for (a, b) in w.iter().zip([1.0, 0.8, 0.6, 0.4]) {
            assert!((a - b).abs() < 1e-15);
        }
        for (a, b) in c.iter().zip([0.2, 0.25, 1.0 / 3.0, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
        let (lhs, rhs) = cova_terms(&[0.7, 0.3], &[0.4, 0.6]).unwrap();
        let d = binary_divergence(bp(0.7).unwrap(), bp(0.4).unwrap()).unwrap();
        assert!((lhs - d).abs() < 1e-15 && (rhs - d).abs() < 1e-15);
    }

    #[test]
    fn cova_and_tree_checks_agree() {
        let r = check_cova_decomposition(1000, 2..=10, 4).unwrap();
        assert!(r.passed, "{}", r.max_violation);
        let mut rng = stream(4, &[99]);
        for _ in 0..200 {
            let inst = sample_tree_instance(&mut rng, &(2..=10), TreeSampler::Cova).unwrap();
            let (l1, r1) = cova_terms(&inst.p, &inst.q).unwrap();
            let (l2, r2) = tree_terms(&inst, Fault::None).unwrap();
            assert!((l1 - l2).abs() <= 1e-12 && (r1 - r2).abs() <= 1e-12);
        }
    }

    #[test]
    fn dpi_bound_has_slack() {
        let r = check_dpi_loose_bound(1000, 2..=10, 6).unwrap();
        assert!(r.passed);
        assert!(r.max_slack > 0.0);
        let inst = TreeInstance {
            tree: "(((0 1) 2) (3 4))".into(),
            p: vec![0.1, 0.2, 0.3, 0.2, 0.2],
            q: vec![0.3, 0.1, 0.2, 0.2, 0.2],
        };
        let (_, weighted) = tree_terms(&inst, Fault::None).unwrap();
        let (_, unweighted) = dpi_terms(&inst).unwrap();
        assert!(unweighted > weighted);
    }

    #[test]
    fn projection_identity_holds() {
        let r = check_projection_identity(100, 100, 2..=10, 8).unwrap();
        assert!(r.passed, "{}", r.max_violation);
        let inst: ProjectionInstance = serde_json::from_value(r.worst_inputs.unwrap()).unwrap();
        assert_eq!(projection_gap(&inst).unwrap().to_bits(), r.records[r.worst_trial.unwrap()].lhs.to_bits());
    }

    #[test]
    fn gradient_results_convert() {
        let rep = crate::learners::check_softmax_gradients(3, 1e-5, 1e-4, 1);
        let r = gradient_check_result("softmax-gradients", &rep);
        assert_eq!(r.passed, rep.passed);
        assert!(r.max_violation < 0.0);
    }

    #[test]
    fn bad_ranges_are_rejected() {
        assert!(check_ova_bound(10, 1..=4, 0).is_err());
        assert!(check_ova_bound(0, 2..=4, 0).is_err());
    }

    fn mixture_data(n: usize) -> (Arc<GaussianMixture>, LabeledDataset<f64>) {
        let spec = GaussianMixtureSpec::draw(Scenario::A, 4, 3, 1.0, 0.1, 21).unwrap();
        let mix = Arc::new(GaussianMixture::new(spec).unwrap());
        let data = mix.sample(n, 1);
        (mix, data)
    }

    #[test]
    fn conditional_decomposition_on_samples() {
        let (mix, data) = mixture_data(500);
        let tree = build_balanced_tree(4, None).unwrap();
        let exact = check_conditional_decomposition(&data, &tree, mix.as_ref()).unwrap();
        assert!(exact.passed);
        assert!(exact.records[0].lhs.abs() < 1e-12);

        let guess = crate::compose::ova_compose(vec![ConstantScorer(0.1), ConstantScorer(0.2), ConstantScorer(0.3), ConstantScorer(0.4)]).unwrap();
        let r = check_conditional_decomposition(&data, &tree, &guess).unwrap();
        assert!(r.passed, "{}", r.max_violation);
        assert!(r.records[0].lhs > 0.01);
        let terms = &r.records[0].terms;
        let sum: f64 = (0..3).map(|j| terms[&format!("node{j:03}.weight")] * terms[&format!("node{j:03}.regret")]).sum();
        assert!((sum - r.records[0].rhs).abs() < 1e-12);
        assert!((terms["node000.weight"] - 1.0).abs() < 1e-12);

        // One sample reduces to the pointwise decomposition.
        let one = data.head(1);
        let r1 = check_conditional_decomposition(&one, &tree, &guess).unwrap();
        let (l, rr) = tree_terms(
            &TreeInstance {
                tree: serialize_tree(&tree),
                p: one.posterior(0).unwrap().to_vec(),
                q: guess.posterior(one.row(0)).into_vec(),
            },
            Fault::None,
        )
        .unwrap();
        assert!((r1.records[0].lhs - l).abs() < 1e-15 && (r1.records[0].rhs - rr).abs() < 1e-15);
    }

    #[test]
    fn pinsker_with_exact_and_wrong_scorers() {
        let (mix, data) = mixture_data(2000);
        let exact = check_pinsker_zero_one(&data, &bayes_class_scorers(&mix)).unwrap();
        assert!(exact.passed);
        // Renormalized stored posteriors differ from the scorer by rounding only.
        assert!(exact.records[0].rhs < 1e-6);
        assert!(exact.records[0].lhs.abs() < 1e-15);

        // Class scorers shifted by one: confidently wrong.
        let mut permuted = bayes_class_scorers(&mix);
        permuted.rotate_left(1);
        let r = check_pinsker_zero_one(&data, &permuted).unwrap();
        assert!(r.passed);
        assert!(r.records[0].rhs > 1.0);
        assert!(r.records[0].lhs > 0.3);

        let flat = vec![LogisticScorer::constant(0.25, data.dim()); 4];
        assert!(check_pinsker_zero_one(&data, &flat).unwrap().passed);
    }

    #[test]
    fn dataset_checks_need_posteriors() {
        let data = LabeledDataset::from_raw_rows(&[vec![0.0], vec![1.0]], vec![0, 1], 2, None).unwrap();
        let tree = build_cova_tree(2).unwrap();
        let q = crate::compose::softmax_scorer(crate::compose::SoftmaxParams::<f64>::zeros(2, 2).unwrap());
        assert!(matches!(check_conditional_decomposition(&data, &tree, &q), Err(Error::MissingPosteriors)));
        assert!(matches!(check_pinsker_zero_one(&data, &[ConstantScorer(0.5), ConstantScorer(0.5)]), Err(Error::MissingPosteriors)));
    }
}
