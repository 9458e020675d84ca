use std::path::{Path, PathBuf};
use std::time::Instant;

use logloss_mc::compose::predict_batch;
use logloss_mc::learners::{train_hierarchical, train_leveraged, train_ova, train_softmax, LeveragedInit, TrainConfig};
use logloss_mc::model::{load_model, save_model, Model};
use logloss_mc::prob::empirical_report;
use logloss_mc::{serialize_tree, LabeledDataset, SoftmaxParams};
use serde::{Deserialize, Serialize};

use super::{ensure_dir, file_sha256, load_split, manifest_path, model_path, sha256_hex, write_json, TRAIN_FILE};
use crate::error::{CliError, CliResult};
use crate::trees::resolve_tree;
use crate::{Method, TrainArgs};

/// Everything that determines a trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub method: String,
    /// Tree source as given, and the resolved tree text.
    pub tree_source: Option<String>,
    pub tree: Option<String>,
    pub data: PathBuf,
    pub train: TrainConfig,
    /// Epochs of the softmax baseline when they differ from `train.epochs`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_epochs: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Baseline {
    /// `loaded` or `trained`.
    pub source: String,
    pub model_file: String,
    pub config_digest: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeSummary {
    pub node: usize,
    pub samples: usize,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
    pub epoch: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub settings: RunSettings,
    pub dataset_sha256: String,
    pub config_digest: String,
    pub model_file: String,
    pub model_sha256: String,
    /// Mean multiclass log-loss of the returned model on the training set.
    pub final_train_loss: f64,
    pub baseline: Option<Baseline>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<NodeSummary>,
    pub wall_time_secs: f64,
}

/// Digest of the method, tree, training configuration and training data.
fn config_digest(method: &str, tree: Option<&str>, train: &TrainConfig, dataset_sha256: &str) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        method: &'a str,
        tree: Option<&'a str>,
        train: &'a TrainConfig,
        dataset_sha256: &'a str,
    }
    let key = Key {
        method,
        tree,
        train,
        dataset_sha256,
    };
    sha256_hex(serde_json::to_string(&key).expect("plain data serializes").as_bytes())
}

fn train_loss(model: &Model, data: &LabeledDataset<f64>) -> CliResult<f64> {
    let scorer = model.scorer()?;
    let preds = predict_batch(&scorer, data.features(), data.dim());
    Ok(empirical_report(&preds, data.labels(), None)?.log_loss)
}

fn settings_from_args(args: &TrainArgs) -> CliResult<RunSettings> {
    if let Some(path) = &args.manifest {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        return Ok(manifest.settings);
    }
    let method = args.method.expect("clap requires --method without --manifest");
    let data = args.data.clone().expect("clap requires --data without --manifest");
    match (method.uses_tree(), &args.tree) {
        (true, None) => return Err(CliError::Config(format!("--tree is required for method {}", method.name()))),
        (false, Some(_)) => return Err(CliError::Config(format!("--tree does not apply to method {}", method.name()))),
        _ => {}
    }
    if args.baseline_epochs.is_some() && method != Method::Leveraged {
        return Err(CliError::Config("--baseline-epochs applies to the leveraged method only".into()));
    }
    let train = TrainConfig {
        learning_rate: args.lr,
        batch_size: args.batch,
        epochs: args.epochs,
        seed: args.seed,
        keep_best: args.keep_best,
    };
    train.validate()?;
    Ok(RunSettings {
        method: method.name().to_string(),
        tree_source: args.tree.clone(),
        tree: None,
        data,
        train,
        baseline_epochs: args.baseline_epochs.filter(|&e| e != args.epochs),
    })
}

/// Loads the softmax baseline from `out` when its digest matches, else
/// trains and saves it.
fn softmax_baseline(
    data: &LabeledDataset<f64>,
    settings: &RunSettings,
    dataset_sha256: &str,
    out: &Path,
) -> CliResult<(SoftmaxParams<f64>, Baseline)> {
    let train = TrainConfig {
        epochs: settings.baseline_epochs.unwrap_or(settings.train.epochs),
        ..settings.train.clone()
    };
    let digest = config_digest(Method::Softmax.name(), None, &train, dataset_sha256);
    let model_file = model_path(out, Method::Softmax);
    let manifest_file = manifest_path(out, Method::Softmax);
    let name = model_file.file_name().unwrap_or_default().to_string_lossy().to_string();
    if let Ok(text) = std::fs::read_to_string(&manifest_file) {
        if let Ok(m) = serde_json::from_str::<Manifest>(&text) {
            let intact = file_sha256(&model_file).is_ok_and(|h| h == m.model_sha256);
            if m.config_digest == digest && intact {
                if let Model::Softmax(params) = load_model(&model_file)? {
                    let baseline = Baseline {
                        source: "loaded".into(),
                        model_file: name,
                        config_digest: digest,
                    };
                    return Ok((params, baseline));
                }
            }
        }
    }
    println!("training softmax baseline");
    let sub = RunSettings {
        method: Method::Softmax.name().into(),
        tree_source: None,
        tree: None,
        data: settings.data.clone(),
        train,
        baseline_epochs: None,
    };
    let manifest = train_and_save(data, &sub, dataset_sha256, out)?;
    let Model::Softmax(params) = load_model(out.join(&manifest.model_file))? else {
        unreachable!("softmax run writes a softmax model")
    };
    let baseline = Baseline {
        source: "trained".into(),
        model_file: name,
        config_digest: digest,
    };
    Ok((params, baseline))
}

fn train_and_save(data: &LabeledDataset<f64>, settings: &RunSettings, dataset_sha256: &str, out: &Path) -> CliResult<Manifest> {
    let start = Instant::now();
    let method = Method::parse(&settings.method)?;
    let cfg = &settings.train;
    let tree = match &settings.tree_source {
        Some(src) if method.uses_tree() => Some(resolve_tree(src, data.num_classes())?),
        _ => None,
    };
    let tree_text = tree.as_ref().map(serialize_tree);
    let mut baseline = None;
    let mut nodes = Vec::new();
    let model = match method {
        Method::Softmax => Model::Softmax(train_softmax(data, cfg)?.params),
        Method::Ova => Model::Ova(train_ova(data, cfg)?.into_iter().map(|f| f.scorer).collect()),
        Method::Hierarchical => {
            let tree = tree.expect("tree resolved above");
            let fits = train_hierarchical(data, &tree, cfg)?;
            Model::Hierarchical {
                tree,
                nodes: fits.into_iter().map(|f| f.scorer).collect(),
            }
        }
        Method::Leveraged => {
            let tree = tree.expect("tree resolved above");
            let (params, base) = softmax_baseline(data, settings, dataset_sha256, out)?;
            baseline = Some(base);
            let fit = train_leveraged(data, &tree, LeveragedInit::Softmax(&params), cfg)?;
            nodes = fit
                .node_reports
                .iter()
                .map(|r| NodeSummary {
                    node: r.node,
                    samples: r.samples,
                    initial_loss: r.initial_loss,
                    final_loss: r.final_loss,
                    epoch: r.epoch,
                })
                .collect();
            Model::Leveraged { tree, params: fit.params }
        }
    };
    let model_file = model_path(out, method);
    save_model(&model_file, &model)?;
    let final_train_loss = train_loss(&model, data)?;
    let mut resolved = settings.clone();
    resolved.tree = tree_text.clone();
    let manifest = Manifest {
        config_digest: config_digest(method.name(), tree_text.as_deref(), cfg, dataset_sha256),
        settings: resolved,
        dataset_sha256: dataset_sha256.to_string(),
        model_file: model_file.file_name().unwrap_or_default().to_string_lossy().to_string(),
        model_sha256: file_sha256(&model_file)?,
        final_train_loss,
        baseline,
        nodes,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    write_json(&manifest_path(out, method), &manifest)?;
    println!(
        "{}: final train log-loss {final_train_loss:.4}, wrote {} ({:.1}s)",
        method.name(),
        model_file.display(),
        manifest.wall_time_secs
    );
    Ok(manifest)
}

pub fn run(args: &TrainArgs) -> CliResult<()> {
    let settings = settings_from_args(args)?;
    let out = match (&args.out, &args.manifest) {
        (Some(o), _) => o.clone(),
        (None, Some(m)) => m
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf),
        (None, None) => settings.data.clone(),
    };
    ensure_dir(&out)?;
    let data = load_split(&settings.data, TRAIN_FILE)?;
    let dataset_sha256 = file_sha256(&settings.data.join(TRAIN_FILE))?;
    train_and_save(&data, &settings, &dataset_sha256, &out).map(|_| ())
}
