//! Soft multiclass classifiers built from binary classifiers under
//! logarithmic loss: one-vs-all, hierarchical trees, conditional OVA and
//! leveraged hierarchical softmax, with numerical checks of their regret
//! decompositions.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the scalar to `f64`.

pub mod compose;
pub mod datasets;
pub mod error;
pub mod learners;
pub mod model;
pub mod prob;
pub mod regret;
pub mod rng;
pub mod scalar;
pub mod tree;

pub use compose::{
    hierarchical_compose, leveraged_node_scorer, leveraged_scorer, ova_compose, predict_batch,
    project_softmax_to_node, projected_softmax_scorer, softmax_scorer, BinaryScorer, ConstantScorer,
    HierarchicalScorer, LeveragedParams, LogisticScorer, MulticlassScorer, NodeSoftmaxScorer, OvaScorer,
    SoftmaxParams, SoftmaxScorer,
};
pub use datasets::{GaussianMixture, GaussianMixtureSpec, LabeledDataset, Scenario};
pub use error::{Error, Result};
pub use learners::TrainConfig;
pub use model::{load_model, save_model, Model, ModelKind, ModelScorer};
pub use prob::{
    binary_divergence, binary_entropy, binary_log_loss, cross_entropy, empirical_report, kl_divergence,
    BinaryProb, Categorical, LossReport,
};
pub use regret::TheoremCheckResult;
pub use scalar::Scalar;
pub use tree::{
    build_balanced_tree, build_cova_tree, compose_from_nodes, induce_node_probs, node_reach_probs, parse_tree,
    random_tree, serialize_tree, ClassTree, NodeProbabilities,
};

pub type Categorical64 = Categorical<f64>;
pub type BinaryProb64 = BinaryProb<f64>;
pub type LossReport64 = LossReport<f64>;
pub type NodeProbabilities64 = NodeProbabilities<f64>;
pub type SoftmaxParams64 = SoftmaxParams<f64>;
pub type LeveragedParams64 = LeveragedParams<f64>;
pub type LogisticScorer64 = LogisticScorer<f64>;
pub type LabeledDataset64 = LabeledDataset<f64>;
