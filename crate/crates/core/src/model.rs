//! Trained-model container.
//!
//! A plain-text header followed by little-endian f64 weight vectors:
//!
//! ```text
//! logloss-mc model v1
//! kind <softmax|ova|hierarchical|leveraged>
//! k <classes>
//! d <vector length, intercept included>
//! tree <tree text, or - for none>
//! vectors <count>
//! end
//! ```
//!
//! Vector order: softmax `β_0 … β_{K−1}`; ova one per class; hierarchical
//! one per node; leveraged by node, then by ascending class within `S_i`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::compose::{
    hierarchical_compose, leveraged_scorer, ova_compose, softmax_scorer, HierarchicalScorer, LeveragedParams,
    LogisticScorer, MulticlassScorer, NodeSoftmaxScorer, OvaScorer, SoftmaxParams, SoftmaxScorer,
};
use crate::error::{Error, Result};
use crate::tree::{parse_tree, serialize_tree, ClassTree};

const MAGIC: &str = "logloss-mc model v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Softmax,
    Ova,
    Hierarchical,
    Leveraged,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Softmax => "softmax",
            ModelKind::Ova => "ova",
            ModelKind::Hierarchical => "hierarchical",
            ModelKind::Leveraged => "leveraged",
        }
    }

    pub fn uses_tree(self) -> bool {
        matches!(self, ModelKind::Hierarchical | ModelKind::Leveraged)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(ModelKind::Softmax),
            "ova" => Ok(ModelKind::Ova),
            "hierarchical" => Ok(ModelKind::Hierarchical),
            "leveraged" => Ok(ModelKind::Leveraged),
            other => Err(Error::InvalidConfig(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Softmax(SoftmaxParams<f64>),
    Ova(Vec<LogisticScorer<f64>>),
    Hierarchical { tree: ClassTree, nodes: Vec<LogisticScorer<f64>> },
    Leveraged { tree: ClassTree, params: LeveragedParams<f64> },
}

/// A model ready for prediction.
pub enum ModelScorer {
    Softmax(SoftmaxScorer<f64>),
    Ova(OvaScorer<LogisticScorer<f64>>),
    Hierarchical(HierarchicalScorer<LogisticScorer<f64>>),
    Leveraged(HierarchicalScorer<NodeSoftmaxScorer<f64>>),
}

impl ModelScorer {
    /// The tree of a hierarchical or leveraged model.
    pub fn tree(&self) -> Option<&ClassTree> {
        match self {
            ModelScorer::Hierarchical(h) => Some(h.tree()),
            ModelScorer::Leveraged(h) => Some(h.tree()),
            _ => None,
        }
    }

    /// Node success probabilities at `x`; `false` for models without a tree.
    pub fn node_probs_into(&self, x: &[f64], out: &mut [f64]) -> bool {
        match self {
            ModelScorer::Hierarchical(h) => h.node_probs_into(x, out),
            ModelScorer::Leveraged(h) => h.node_probs_into(x, out),
            _ => return false,
        }
        true
    }
}

impl MulticlassScorer<f64> for ModelScorer {
    fn num_classes(&self) -> usize {
        match self {
            ModelScorer::Softmax(s) => s.num_classes(),
            ModelScorer::Ova(s) => s.num_classes(),
            ModelScorer::Hierarchical(s) => s.num_classes(),
            ModelScorer::Leveraged(s) => s.num_classes(),
        }
    }

    fn predict_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            ModelScorer::Softmax(s) => s.predict_into(x, out),
            ModelScorer::Ova(s) => s.predict_into(x, out),
            ModelScorer::Hierarchical(s) => s.predict_into(x, out),
            ModelScorer::Leveraged(s) => s.predict_into(x, out),
        }
    }
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Softmax(_) => ModelKind::Softmax,
            Model::Ova(_) => ModelKind::Ova,
            Model::Hierarchical { .. } => ModelKind::Hierarchical,
            Model::Leveraged { .. } => ModelKind::Leveraged,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            Model::Softmax(p) => p.num_classes(),
            Model::Ova(b) => b.len(),
            Model::Hierarchical { tree, .. } | Model::Leveraged { tree, .. } => tree.num_classes(),
        }
    }

    /// Weight-vector length, intercept included.
    pub fn dim(&self) -> usize {
        match self {
            Model::Softmax(p) => p.dim(),
            Model::Ova(b) => b.first().map_or(0, |s| s.weights().len()),
            Model::Hierarchical { nodes, .. } => nodes.first().map_or(0, |s| s.weights().len()),
            Model::Leveraged { params, .. } => params.dim(),
        }
    }

    pub fn tree(&self) -> Option<&ClassTree> {
        match self {
            Model::Hierarchical { tree, .. } | Model::Leveraged { tree, .. } => Some(tree),
            _ => None,
        }
    }

    pub fn scorer(&self) -> Result<ModelScorer> {
        Ok(match self {
            Model::Softmax(p) => ModelScorer::Softmax(softmax_scorer(p.clone())),
            Model::Ova(b) => ModelScorer::Ova(ova_compose(b.clone())?),
            Model::Hierarchical { tree, nodes } => {
                ModelScorer::Hierarchical(hierarchical_compose(tree.clone(), nodes.clone())?)
            }
            Model::Leveraged { tree, params } => ModelScorer::Leveraged(leveraged_scorer(params, tree)?),
        })
    }

    fn vectors(&self) -> Vec<&[f64]> {
        match self {
            Model::Softmax(p) => p.betas().iter().map(Vec::as_slice).collect(),
            Model::Ova(b) | Model::Hierarchical { nodes: b, .. } => b.iter().map(|s| s.weights()).collect(),
            Model::Leveraged { params, .. } => (0..params.num_nodes())
                .flat_map(|i| params.node(i).values().map(Vec::as_slice))
                .collect(),
        }
    }
}

pub fn write_model<W: Write>(mut w: W, model: &Model) -> std::io::Result<()> {
    let vectors = model.vectors();
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "kind {}", model.kind())?;
    writeln!(w, "k {}", model.num_classes())?;
    writeln!(w, "d {}", model.dim())?;
    match model.tree() {
        Some(t) => writeln!(w, "tree {}", serialize_tree(t))?,
        None => writeln!(w, "tree -")?,
    }
    writeln!(w, "vectors {}", vectors.len())?;
    writeln!(w, "end")?;
    for v in vectors {
        for x in v {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn save_model(path: impl AsRef<Path>, model: &Model) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_model(BufWriter::new(file), model).map_err(|e| Error::io(path, e))
}

fn field<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| Error::HeaderMismatch(format!("expected `{key} …`, got {line:?}")))
}

fn count(line: &str, key: &str) -> Result<usize> {
    field(line, key)?
        .parse()
        .map_err(|_| Error::HeaderMismatch(format!("bad count in {line:?}")))
}

pub fn read_model<R: Read>(r: R) -> Result<Model> {
    let mut r = BufReader::new(r);
    let mut lines = Vec::with_capacity(7);
    for _ in 0..7 {
        let mut line = String::new();
        r.read_line(&mut line)
            .map_err(|e| Error::HeaderMismatch(format!("unreadable header: {e}")))?;
        lines.push(line.trim_end_matches('\n').to_string());
    }
    if lines[0] != MAGIC {
        return Err(Error::HeaderMismatch(format!("bad magic line {:?}", lines[0])));
    }
    let kind: ModelKind = field(&lines[1], "kind")?.parse()?;
    let k = count(&lines[2], "k")?;
    let dim = count(&lines[3], "d")?;
    let tree_text = field(&lines[4], "tree")?;
    let n_vec = count(&lines[5], "vectors")?;
    if lines[6] != "end" {
        return Err(Error::HeaderMismatch("missing `end` line".into()));
    }
    let tree = match (kind.uses_tree(), tree_text) {
        (false, "-") => None,
        (true, text) if text != "-" => Some(parse_tree(text)?),
        _ => return Err(Error::HeaderMismatch(format!("tree field {tree_text:?} does not fit kind {kind}"))),
    };
    if let Some(t) = &tree {
        if t.num_classes() != k {
            return Err(Error::HeaderMismatch(format!("tree has {} classes, header {k}", t.num_classes())));
        }
    }
    let expected_vectors = match kind {
        ModelKind::Softmax | ModelKind::Ova => k,
        ModelKind::Hierarchical => k.saturating_sub(1),
        ModelKind::Leveraged => tree.as_ref().map_or(0, ClassTree::leveraged_vector_count),
    };
    if n_vec != expected_vectors {
        return Err(Error::HeaderMismatch(format!(
            "{kind} model with {k} classes needs {expected_vectors} vectors, header says {n_vec}"
        )));
    }

    let mut payload = Vec::new();
    r.read_to_end(&mut payload)
        .map_err(|e| Error::HeaderMismatch(format!("unreadable payload: {e}")))?;
    if payload.len() != 8 * n_vec * dim {
        return Err(Error::HeaderMismatch(format!(
            "header promises {} payload bytes, file has {}",
            8 * n_vec * dim,
            payload.len()
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut vectors = values.chunks(dim.max(1)).map(<[f64]>::to_vec);

    Ok(match kind {
        ModelKind::Softmax => Model::Softmax(SoftmaxParams::new(vectors.collect())?),
        ModelKind::Ova => Model::Ova(vectors.map(LogisticScorer::new).collect()),
        ModelKind::Hierarchical => Model::Hierarchical {
            tree: tree.expect("checked above"),
            nodes: vectors.map(LogisticScorer::new).collect(),
        },
        ModelKind::Leveraged => {
            let tree = tree.expect("checked above");
            let nodes: Vec<BTreeMap<usize, Vec<f64>>> = tree
                .nodes()
                .iter()
                .map(|n| n.subset().iter().map(|&c| (c, vectors.next().expect("count checked"))).collect())
                .collect();
            let params = LeveragedParams::new(&tree, nodes)?;
            Model::Leveraged { tree, params }
        }
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(file)
}
