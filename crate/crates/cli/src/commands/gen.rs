use std::path::{Path, PathBuf};

use logloss_mc::datasets::{load_mnist_idx, save_dataset, GaussianMixture, GaussianMixtureSpec, Scenario, TEST_STREAM, TRAIN_STREAM};
use logloss_mc::prob::argmax;
use logloss_mc::LabeledDataset;
use serde::Serialize;

use super::{ensure_dir, file_sha256, write_json, TEST_FILE, TRAIN_FILE};
use crate::error::{CliError, CliResult};
use crate::{GenArgs, ScenarioArg};

pub const MIXTURE_FILE: &str = "mixture.json";
pub const SOURCE_FILE: &str = "source.json";

const MNIST_FILES: [(&str, &str); 2] = [
    ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
];

#[derive(Serialize)]
struct MnistSource {
    source: &'static str,
    crop: usize,
    files: Vec<(String, String)>,
}

/// Bayes log-loss and error from stored posteriors.
fn bayes_summary(ds: &LabeledDataset<f64>) -> Option<(f64, f64)> {
    ds.posterior_values()?;
    let n = ds.len() as f64;
    let mut loss = 0.0;
    let mut errors = 0usize;
    for (i, &y) in ds.labels().iter().enumerate() {
        let p = ds.posterior(i)?;
        loss -= p[y].max(logloss_mc::prob::EVAL_CLAMP).ln();
        errors += usize::from(argmax(p) != y);
    }
    Some((loss / n, errors as f64 / n))
}

fn save(dir: &Path, name: &str, ds: &LabeledDataset<f64>) -> CliResult<()> {
    save_dataset(dir.join(name), ds)?;
    let extra = bayes_summary(ds)
        .map(|(l, e)| format!(", Bayes log-loss {l:.4}, Bayes error {e:.4}"))
        .unwrap_or_default();
    println!("wrote {} ({} rows, d={}, K={}{extra})", dir.join(name).display(), ds.len(), ds.raw_dim(), ds.num_classes());
    Ok(())
}

/// Locates an IDX file, accepting the `name.idx…` spelling as well.
fn find_idx(dir: &Path, name: &str) -> CliResult<PathBuf> {
    let dotted = name.replacen("-idx", ".idx", 1);
    [name.to_string(), dotted]
        .iter()
        .map(|n| dir.join(n))
        .find(|p| p.exists())
        .ok_or_else(|| CliError::Io(format!("{} not found in {}", name, dir.display())))
}

fn gen_mnist(args: &GenArgs, dir: &Path) -> CliResult<()> {
    let mut files = Vec::new();
    for ((images, labels), out) in MNIST_FILES.iter().zip([TRAIN_FILE, TEST_FILE]) {
        let img = find_idx(dir, images)?;
        let lbl = find_idx(dir, labels)?;
        let ds = load_mnist_idx(&img, &lbl, args.crop)?;
        for p in [&img, &lbl] {
            files.push((p.file_name().unwrap_or_default().to_string_lossy().to_string(), file_sha256(p)?));
        }
        save(&args.out, out, &ds)?;
    }
    write_json(
        &args.out.join(SOURCE_FILE),
        &MnistSource {
            source: "mnist",
            crop: args.crop,
            files,
        },
    )
}

pub fn run(args: &GenArgs) -> CliResult<()> {
    ensure_dir(&args.out)?;
    if let Some(dir) = &args.mnist_dir {
        return gen_mnist(args, dir);
    }
    if args.train_n == 0 || args.test_n == 0 {
        return Err(CliError::Config("--train-n and --test-n must be positive".into()));
    }
    let scenario = match args.scenario {
        ScenarioArg::A => Scenario::A,
        ScenarioArg::B => Scenario::B,
    };
    let spec = GaussianMixtureSpec::draw(scenario, args.classes, args.dim, args.sigma, args.alpha_scale, args.seed)?;
    let mixture = GaussianMixture::new(spec.clone())?;
    save(&args.out, TRAIN_FILE, &mixture.sample(args.train_n, TRAIN_STREAM))?;
    save(&args.out, TEST_FILE, &mixture.sample(args.test_n, TEST_STREAM))?;
    write_json(&args.out.join(MIXTURE_FILE), &spec)
}
