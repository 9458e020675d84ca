//! Tree sources accepted by `--tree`.

use std::path::Path;

use logloss_mc::{build_balanced_tree, build_cova_tree, parse_tree, ClassTree};

use crate::error::{CliError, CliResult};

/// Best-effort grouping of the ten digits by shape: curved `{0,2,6,8}`
/// against `{1,7,4,5,3,9}` at the root.
pub const MNIST_CURVED_TREE: &str = include_str!("../trees/mnist-curved.tree");

pub const TREE_SOURCES: &str =
    "cova | balanced | balanced:<comma-separated permutation> | mnist-curved | file:<path>";

/// Resolves a tree source for `k` classes.
pub fn resolve_tree(source: &str, k: usize) -> CliResult<ClassTree> {
    let tree = match source {
        "cova" => build_cova_tree(k)?,
        "balanced" => build_balanced_tree(k, None)?,
        "mnist-curved" => parse_tree(MNIST_CURVED_TREE)?,
        s => {
            if let Some(perm) = s.strip_prefix("balanced:") {
                let order = perm
                    .split(',')
                    .map(|v| v.trim().parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| CliError::Config(format!("bad permutation {perm:?}")))?;
                build_balanced_tree(k, Some(&order))?
            } else if let Some(path) = s.strip_prefix("file:") {
                let path = Path::new(path);
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                parse_tree(&text)?
            } else {
                return Err(CliError::Config(format!("unknown tree source {s:?}; expected {TREE_SOURCES}")));
            }
        }
    };
    if tree.num_classes() != k {
        return Err(CliError::Data(format!(
            "tree {source:?} covers {} classes, dataset has {k}",
            tree.num_classes()
        )));
    }
    Ok(tree)
}
