use std::path::Path;

use logloss_mc::compose::{predict_batch, MulticlassScorer};
use logloss_mc::model::{load_model, ModelScorer};
use logloss_mc::prob::empirical_report;
use logloss_mc::regret::check_conditional_decomposition;
use logloss_mc::{ClassTree, LabeledDataset};

use super::{check_shape, load_split, model_path, write_file, TEST_FILE, TRAIN_FILE};
use crate::error::{CliError, CliResult};
use crate::report::{num, render_all, Table};
use crate::{EvalArgs, Format};

/// Largest accepted gap between the weighted node sum and the total.
pub const RECONSTRUCTION_TOL: f64 = 1e-9;

struct NodeLosses {
    /// Fraction of samples whose label lies in `S_j`.
    weights: Vec<f64>,
    /// Mean binary log-loss over those samples.
    losses: Vec<f64>,
    /// Mean of `−log Q(y | x)`, unclamped.
    total: f64,
}

/// Label-based node decomposition: `−log Q(y|x)` is the sum of the binary
/// log-losses along `y`'s path, so the weighted node means add up to the
/// multiclass log-loss.
fn node_losses(scorer: &ModelScorer, tree: &ClassTree, data: &LabeledDataset<f64>) -> NodeLosses {
    let n_nodes = tree.num_nodes();
    let mut counts = vec![0usize; n_nodes];
    let mut sums = vec![0.0; n_nodes];
    let mut total = 0.0;
    let mut values = vec![0.0; n_nodes];
    for (i, &y) in data.labels().iter().enumerate() {
        let x = data.row(i);
        scorer.node_probs_into(x, &mut values);
        for &(j, bit) in tree.path(y) {
            let q = if bit { values[j] } else { 1.0 - values[j] };
            counts[j] += 1;
            sums[j] -= q.ln();
        }
        total -= scorer.posterior(x).probs()[y].ln();
    }
    let n = data.len() as f64;
    NodeLosses {
        weights: counts.iter().map(|&c| c as f64 / n).collect(),
        losses: counts.iter().zip(&sums).map(|(&c, &s)| if c > 0 { s / c as f64 } else { 0.0 }).collect(),
        total: total / n,
    }
}

fn branch_text(classes: &[usize]) -> String {
    classes.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")
}

fn check_reconstruction(what: &str, split: &str, sum: f64, total: f64) -> CliResult<()> {
    if sum.is_finite() && total.is_finite() && (sum - total).abs() > RECONSTRUCTION_TOL {
        return Err(CliError::Verification(format!(
            "{split}: weighted node {what} {sum} differs from the multiclass value {total}"
        )));
    }
    Ok(())
}

fn tree_tables(scorer: &ModelScorer, tree: &ClassTree, split: &str, data: &LabeledDataset<f64>) -> CliResult<Vec<Table>> {
    let nl = node_losses(scorer, tree, data);
    let mut t = Table::new(
        Some(format!("{split}: node binary log-losses (weight = fraction of samples reaching the node)")),
        &["node", "one-branch", "zero-branch", "weight", "log-loss", "weighted"],
    );
    let mut sum = 0.0;
    for (j, node) in tree.nodes().iter().enumerate() {
        let weighted = nl.weights[j] * nl.losses[j];
        sum += weighted;
        t.push(vec![
            j.to_string(),
            branch_text(node.one_branch()),
            branch_text(node.zero_branch()),
            num(Some(nl.weights[j])),
            num(Some(nl.losses[j])),
            num(Some(weighted)),
        ]);
    }
    t.push(vec!["sum".into(), String::new(), String::new(), String::new(), String::new(), num(Some(sum))]);
    t.push(vec!["multiclass".into(), String::new(), String::new(), String::new(), String::new(), num(Some(nl.total))]);
    check_reconstruction("log-loss", split, sum, nl.total)?;
    let mut tables = vec![t];

    if data.has_posteriors() {
        let r = check_conditional_decomposition(data, tree, scorer)?;
        let rec = &r.records[0];
        let mut t = Table::new(
            Some(format!("{split}: node regrets (weight = mean probability of reaching the node)")),
            &["node", "weight", "regret", "weighted"],
        );
        for j in 0..tree.num_nodes() {
            let w = rec.terms[&format!("node{j:03}.weight")];
            let reg = rec.terms[&format!("node{j:03}.regret")];
            t.push(vec![j.to_string(), num(Some(w)), num(Some(reg)), num(Some(w * reg))]);
        }
        t.push(vec!["sum".into(), String::new(), String::new(), num(Some(rec.rhs))]);
        t.push(vec!["multiclass".into(), String::new(), String::new(), num(Some(rec.lhs))]);
        check_reconstruction("regret", split, rec.rhs, rec.lhs)?;
        tables.push(t);
    }
    Ok(tables)
}

pub fn run(args: &EvalArgs) -> CliResult<()> {
    let model_dir = args.out.as_deref().unwrap_or(&args.data);
    let model_file = match (&args.model, args.method) {
        (Some(p), _) => p.clone(),
        (None, Some(m)) => model_path(model_dir, m),
        (None, None) => unreachable!("clap requires --method or --model"),
    };
    let model = load_model(&model_file)?;
    let scorer = model.scorer()?;

    let splits: Vec<(&str, LabeledDataset<f64>)> = [("train", TRAIN_FILE), ("test", TEST_FILE)]
        .into_iter()
        .filter(|(_, f)| Path::new(&args.data).join(f).exists())
        .map(|(name, f)| load_split(&args.data, f).map(|d| (name, d)))
        .collect::<CliResult<_>>()?;
    if splits.is_empty() {
        return Err(CliError::Io(format!("no {TRAIN_FILE} or {TEST_FILE} in {}", args.data.display())));
    }

    let mut title = format!("model {} ({})", model.kind(), model_file.display());
    if let Some(t) = model.tree() {
        title.push_str(&format!(", tree {}", logloss_mc::serialize_tree(t)));
    }
    let mut summary = Table::new(
        Some(title),
        &["split", "samples", "log-loss", "error", "regret", "optimal-log-loss", "bayes-error"],
    );
    let mut node_tables = Vec::new();
    for (name, data) in &splits {
        check_shape(&model, data, name)?;
        let preds = predict_batch(&scorer, data.features(), data.dim());
        let post = data.has_posteriors().then(|| data.posterior_categoricals()).transpose()?;
        let r = empirical_report(&preds, data.labels(), post.as_deref())?;
        summary.push(vec![
            name.to_string(),
            data.len().to_string(),
            num(Some(r.log_loss)),
            num(Some(r.zero_one_error)),
            num(r.regret),
            num(r.optimal_log_loss),
            num(r.bayes_zero_one_error),
        ]);
        if let Some(tree) = scorer.tree() {
            node_tables.extend(tree_tables(&scorer, tree, name, data)?);
        }
    }
    let mut tables = vec![summary];
    tables.extend(node_tables);
    let text = render_all(&tables, args.format);
    print!("{text}");
    if let Some(path) = &args.report {
        write_file(path, &text)?;
    }
    if args.format == Format::Text {
        if let ModelScorer::Ova(o) = &scorer {
            if o.fallback_count() > 0 {
                eprintln!("note: {} OVA predictions fell back to uniform (all scores zero)", o.fallback_count());
            }
        }
    }
    Ok(())
}
