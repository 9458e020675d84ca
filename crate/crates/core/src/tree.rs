//! Binary class trees with `K − 1` internal nodes and their prefix codes.
//!
//! Internal nodes are indexed in pre-order. Each node splits its class set
//! `S_j` into a bit-1 branch `S_j^1` and a bit-0 branch `S_j^0`; the path
//! from the root to a leaf spells that class's codeword.
//!
//! The text format is a nested parenthesized expression `(A B)` where `A`
//! is the bit-1 subtree, `B` the bit-0 subtree, and leaves are decimal
//! class indices, e.g. `(((0 1) 2) (3 4))`.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::prob::{BinaryProb, Categorical};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Child {
    Node(usize),
    Leaf(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InternalNode {
    subset: Vec<usize>,
    one_branch: Vec<usize>,
    zero_branch: Vec<usize>,
    one_child: Child,
    zero_child: Child,
}

impl InternalNode {
    /// `S_j`, sorted ascending.
    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    /// `S_j^1`, sorted ascending.
    pub fn one_branch(&self) -> &[usize] {
        &self.one_branch
    }

    /// `S_j^0`, sorted ascending.
    pub fn zero_branch(&self) -> &[usize] {
        &self.zero_branch
    }

    pub fn one_child(&self) -> Child {
        self.one_child
    }

    pub fn zero_child(&self) -> Child {
        self.zero_child
    }

    /// Which branch `class` falls in, or `None` when outside `S_j`.
    pub fn branch_of(&self, class: usize) -> Option<bool> {
        if self.one_branch.binary_search(&class).is_ok() {
            Some(true)
        } else if self.zero_branch.binary_search(&class).is_ok() {
            Some(false)
        } else {
            None
        }
    }
}

/// A full binary tree whose leaves are the classes `0..K`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassTree {
    num_classes: usize,
    nodes: Vec<InternalNode>,
    /// Per class: the `(node, bit)` pairs from the root to its leaf.
    paths: Vec<Vec<(usize, bool)>>,
}

#[derive(Clone, Debug)]
enum Shape {
    Leaf(usize),
    Split(Box<Shape>, Box<Shape>),
}

impl Shape {
    fn split(one: Shape, zero: Shape) -> Shape {
        Shape::Split(Box::new(one), Box::new(zero))
    }

    fn leaves(&self, out: &mut Vec<usize>) {
        match self {
            Shape::Leaf(c) => out.push(*c),
            Shape::Split(a, b) => {
                a.leaves(out);
                b.leaves(out);
            }
        }
    }
}

impl ClassTree {
    fn from_shape(shape: &Shape) -> Result<Self> {
        let mut leaves = Vec::new();
        shape.leaves(&mut leaves);
        let k = leaves.len();
        if k < 2 {
            return Err(Error::InvalidK(k));
        }
        let mut seen = vec![false; k];
        for &c in &leaves {
            if c < k {
                if seen[c] {
                    return Err(Error::DuplicateClass(c));
                }
                seen[c] = true;
            }
        }
        let mut sorted = leaves.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateClass(w[0]));
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::MissingClass(missing));
        }

        let mut tree = ClassTree {
            num_classes: k,
            nodes: Vec::with_capacity(k - 1),
            paths: vec![Vec::new(); k],
        };
        let mut prefix = Vec::new();
        tree.push_subtree(shape, &mut prefix);
        debug_assert_eq!(tree.nodes.len(), k - 1);
        Ok(tree)
    }

    /// Appends `shape` in pre-order; returns the child handle for its root.
    fn push_subtree(&mut self, shape: &Shape, prefix: &mut Vec<(usize, bool)>) -> Child {
        match shape {
            Shape::Leaf(c) => {
                self.paths[*c] = prefix.clone();
                Child::Leaf(*c)
            }
            Shape::Split(one, zero) => {
                let idx = self.nodes.len();
                let mut one_branch = Vec::new();
                one.leaves(&mut one_branch);
                let mut zero_branch = Vec::new();
                zero.leaves(&mut zero_branch);
                one_branch.sort_unstable();
                zero_branch.sort_unstable();
                let mut subset = [one_branch.as_slice(), zero_branch.as_slice()].concat();
                subset.sort_unstable();
                self.nodes.push(InternalNode {
                    subset,
                    one_branch,
                    zero_branch,
                    one_child: Child::Leaf(usize::MAX),
                    zero_child: Child::Leaf(usize::MAX),
                });
                prefix.push((idx, true));
                let one_child = self.push_subtree(one, prefix);
                prefix.pop();
                prefix.push((idx, false));
                let zero_child = self.push_subtree(zero, prefix);
                prefix.pop();
                self.nodes[idx].one_child = one_child;
                self.nodes[idx].zero_child = zero_child;
                Child::Node(idx)
            }
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[InternalNode] {
        &self.nodes
    }

    pub fn node(&self, j: usize) -> Result<&InternalNode> {
        self.nodes.get(j).ok_or(Error::NodeOutOfRange {
            node: j,
            nodes: self.nodes.len(),
        })
    }

    /// `(node, bit)` pairs from the root down to `class`.
    pub fn path(&self, class: usize) -> &[(usize, bool)] {
        &self.paths[class]
    }

    pub fn codeword(&self, class: usize) -> Vec<bool> {
        self.paths[class].iter().map(|&(_, b)| b).collect()
    }

    /// Codeword of `class` as a `0`/`1` string.
    pub fn codeword_string(&self, class: usize) -> String {
        self.paths[class]
            .iter()
            .map(|&(_, b)| if b { '1' } else { '0' })
            .collect()
    }

    /// Length of the longest codeword.
    pub fn depth(&self) -> usize {
        self.paths.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Number of parameter vectors a leveraged classifier on this tree
    /// carries: `Σ_j |S_j|`.
    pub fn leveraged_vector_count(&self) -> usize {
        self.nodes.iter().map(|n| n.subset.len()).sum()
    }

    fn write_child(&self, child: Child, out: &mut String) {
        match child {
            Child::Leaf(c) => out.push_str(&c.to_string()),
            Child::Node(j) => {
                let node = &self.nodes[j];
                out.push('(');
                self.write_child(node.one_child, out);
                out.push(' ');
                self.write_child(node.zero_child, out);
                out.push(')');
            }
        }
    }
}

impl fmt::Display for ClassTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_tree(self))
    }
}

/// Chain tree with `S_i = {i, …, K−1}` and `S_i^1 = {i}`.
pub fn build_cova_tree(k: usize) -> Result<ClassTree> {
    if k < 2 {
        return Err(Error::InvalidK(k));
    }
    let mut shape = Shape::Leaf(k - 1);
    for i in (0..k - 1).rev() {
        shape = Shape::split(Shape::Leaf(i), shape);
    }
    ClassTree::from_shape(&shape)
}

/// Balanced tree from recursive midpoint splits of `order` (identity when
/// `None`). The first `⌈n/2⌉` classes of every list take bit 1.
pub fn build_balanced_tree(k: usize, order: Option<&[usize]>) -> Result<ClassTree> {
    if k < 2 {
        return Err(Error::InvalidK(k));
    }
    let classes: Vec<usize> = match order {
        None => (0..k).collect(),
        Some(order) => {
            if order.len() != k {
                return Err(Error::InvalidPermutation(format!(
                    "expected {k} entries, got {}",
                    order.len()
                )));
            }
            let mut seen = vec![false; k];
            for &c in order {
                if c >= k || std::mem::replace(&mut seen[c], true) {
                    return Err(Error::InvalidPermutation(format!(
                        "entry {c} repeated or out of range"
                    )));
                }
            }
            order.to_vec()
        }
    };
    fn build(classes: &[usize]) -> Shape {
        if classes.len() == 1 {
            return Shape::Leaf(classes[0]);
        }
        let mid = classes.len().div_ceil(2);
        Shape::split(build(&classes[..mid]), build(&classes[mid..]))
    }
    ClassTree::from_shape(&build(&classes))
}

/// Random tree over `k` classes: each class set is shuffled and split at a
/// uniformly chosen point into two nonempty halves, recursively.
pub fn random_tree<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Result<ClassTree> {
    if k < 2 {
        return Err(Error::InvalidK(k));
    }
    fn build<R: Rng + ?Sized>(classes: &mut [usize], rng: &mut R) -> Shape {
        if classes.len() == 1 {
            return Shape::Leaf(classes[0]);
        }
        classes.shuffle(rng);
        let cut = rng.random_range(1..classes.len());
        let (a, b) = classes.split_at_mut(cut);
        let one = build(a, rng);
        let zero = build(b, rng);
        Shape::split(one, zero)
    }
    let mut classes: Vec<usize> = (0..k).collect();
    ClassTree::from_shape(&build(&mut classes, rng))
}

/// Parses the parenthesized tree format.
pub fn parse_tree(text: &str) -> Result<ClassTree> {
    let mut parser = Parser {
        bytes: text.as_bytes(),
        pos: 0,
    };
    let shape = parser.subtree()?;
    parser.skip_ws();
    if parser.pos != parser.bytes.len() {
        return Err(parser.error("trailing characters after tree"));
    }
    if matches!(shape, Shape::Leaf(_)) {
        return Err(Error::InvalidK(1));
    }
    ClassTree::from_shape(&shape)
}

/// Canonical text form: single spaces between siblings, no other whitespace.
pub fn serialize_tree(tree: &ClassTree) -> String {
    let mut out = String::new();
    tree.write_child(Child::Node(0), &mut out);
    out
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> Error {
        Error::Parse {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn subtree(&mut self) -> Result<Shape> {
        self.skip_ws();
        match self.bytes.get(self.pos) {
            Some(b'(') => {
                self.pos += 1;
                let one = self.subtree()?;
                let zero = self.subtree()?;
                self.skip_ws();
                if self.bytes.get(self.pos) != Some(&b')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(Shape::split(one, zero))
            }
            Some(b) if b.is_ascii_digit() => {
                let start = self.pos;
                while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                let digits = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii");
                digits
                    .parse::<usize>()
                    .map(Shape::Leaf)
                    .map_err(|_| self.error("class index too large"))
            }
            Some(_) => Err(self.error("expected '(' or a class index")),
            None => Err(self.error("unexpected end of input")),
        }
    }
}

/// Per-node Bernoulli success probabilities aligned with `ClassTree::nodes`.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeProbabilities<S> {
    values: Vec<S>,
}

impl<S: Scalar> NodeProbabilities<S> {
    pub fn new(values: Vec<S>) -> Result<Self> {
        for &v in &values {
            BinaryProb::new(v)?;
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn get(&self, j: usize) -> BinaryProb<S> {
        BinaryProb::new(self.values[j]).expect("validated on construction")
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn check_classes<S: Scalar>(tree: &ClassTree, p: &Categorical<S>) -> Result<()> {
    if p.num_classes() != tree.num_classes() {
        return Err(Error::LengthMismatch {
            expected: tree.num_classes(),
            got: p.num_classes(),
        });
    }
    Ok(())
}

/// `Pr(Y ∈ S_j)` for every internal node.
pub fn node_reach_probs<S: Scalar>(tree: &ClassTree, p: &Categorical<S>) -> Result<Vec<S>> {
    check_classes(tree, p)?;
    let probs = p.probs();
    Ok(tree
        .nodes
        .iter()
        .map(|n| n.subset.iter().map(|&c| probs[c]).sum())
        .collect())
}

/// `p_{S_j} = Pr(Y ∈ S_j^1 | Y ∈ S_j)`; zero for nodes with no mass.
pub fn induce_node_probs<S: Scalar>(
    tree: &ClassTree,
    p: &Categorical<S>,
) -> Result<NodeProbabilities<S>> {
    check_classes(tree, p)?;
    let mut values = vec![S::zero(); tree.num_nodes()];
    induce_into(tree, p.probs(), &mut values);
    Ok(NodeProbabilities { values })
}

pub(crate) fn induce_into<S: Scalar>(tree: &ClassTree, probs: &[S], out: &mut [S]) {
    for (node, v) in tree.nodes.iter().zip(out.iter_mut()) {
        let one: S = node.one_branch.iter().map(|&c| probs[c]).sum();
        let zero: S = node.zero_branch.iter().map(|&c| probs[c]).sum();
        let total = one + zero;
        *v = if total > S::zero() {
            // one/(one+zero) stays within [0, 1] exactly
            (one / total).min(S::one())
        } else {
            S::zero()
        };
    }
}

/// Class probabilities as products of node values along each codeword.
pub fn compose_from_nodes<S: Scalar>(
    tree: &ClassTree,
    nodes: &NodeProbabilities<S>,
) -> Result<Categorical<S>> {
    if nodes.len() != tree.num_nodes() {
        return Err(Error::LengthMismatch {
            expected: tree.num_nodes(),
            got: nodes.len(),
        });
    }
    let mut out = vec![S::zero(); tree.num_classes()];
    compose_into(tree, &nodes.values, &mut out);
    Ok(Categorical::from_composed(out))
}

pub(crate) fn compose_into<S: Scalar>(tree: &ClassTree, values: &[S], out: &mut [S]) {
    for (class, o) in out.iter_mut().enumerate() {
        *o = tree.paths[class].iter().fold(S::one(), |acc, &(j, bit)| {
            if bit {
                acc * values[j]
            } else {
                acc * (S::one() - values[j])
            }
        });
    }
}
