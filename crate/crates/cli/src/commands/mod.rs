pub mod eval;
pub mod gen;
pub mod train;
pub mod tree;
pub mod verify;

use std::path::{Path, PathBuf};

use logloss_mc::datasets::load_dataset;
use logloss_mc::{LabeledDataset, Model};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::Method;

pub const TRAIN_FILE: &str = "train.ds";
pub const TEST_FILE: &str = "test.ds";

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Softmax => "softmax",
            Method::Ova => "ova",
            Method::Hierarchical => "hierarchical",
            Method::Leveraged => "leveraged",
        }
    }

    pub fn parse(s: &str) -> CliResult<Self> {
        match s {
            "softmax" => Ok(Method::Softmax),
            "ova" => Ok(Method::Ova),
            "hierarchical" => Ok(Method::Hierarchical),
            "leveraged" => Ok(Method::Leveraged),
            other => Err(CliError::Config(format!("unknown method {other:?}"))),
        }
    }

    pub fn uses_tree(self) -> bool {
        matches!(self, Method::Hierarchical | Method::Leveraged)
    }
}

pub fn model_path(dir: &Path, method: Method) -> PathBuf {
    dir.join(format!("model-{}.mdl", method.name()))
}

pub fn manifest_path(dir: &Path, method: Method) -> PathBuf {
    dir.join(format!("manifest-{}.json", method.name()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    write_file(path, text)
}

pub fn load_split(dir: &Path, file: &str) -> CliResult<LabeledDataset<f64>> {
    Ok(load_dataset(dir.join(file))?)
}

/// The model and the dataset agree on K and the feature width.
pub fn check_shape(model: &Model, data: &LabeledDataset<f64>, split: &str) -> CliResult<()> {
    if data.num_classes() != model.num_classes() || data.dim() != model.dim() {
        return Err(CliError::Data(format!(
            "model expects K={} and {} features, {split} set has K={} and {}",
            model.num_classes(),
            model.dim(),
            data.num_classes(),
            data.dim()
        )));
    }
    Ok(())
}
