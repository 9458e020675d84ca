use serde::Serialize;

use logloss_mc::learners::{check_node_loss_gradients, check_softmax_gradients};
use logloss_mc::model::{load_model, Model};
use logloss_mc::regret::{
    check_conditional_decomposition, check_cova_decomposition, check_dpi_loose_bound, check_ova_bound,
    check_pinsker_zero_one, check_projection_identity, check_tree_decomposition_with, gradient_check_result,
    CheckKind, Fault, TreeSampler,
};
use logloss_mc::TheoremCheckResult;

use super::{check_shape, load_split, write_json, TEST_FILE};
use crate::error::{CliError, CliResult};
use crate::report::{render_all, Table};
use crate::trees::resolve_tree;
use crate::{FaultArg, Format, VerifyArgs};

pub const SUITE_HELP: &str = "Comma-separated checks.

Checks on random instances:
  ova-bound                 OVA regret bound, with both proof terms
  tree-decomposition        exact tree decomposition on random trees
  cova-decomposition        COVA decomposition via the tail formulas
  dpi-loose-bound           unweighted node-regret bound
  projection-identity       projected node scorers recompose the softmax
  node-gradients            node loss gradients vs central differences
  softmax-gradients         softmax loss gradients vs central differences

Checks on a dataset with posteriors (need --data and --model, use test.ds):
  conditional-decomposition per-sample decomposition of the regret
  pinsker                   excess zero-one error bound for an OVA model

`all` runs the first group, plus the second when --data and --model are given.";

const RANDOM_CHECKS: [&str; 7] = [
    "ova-bound",
    "tree-decomposition",
    "cova-decomposition",
    "dpi-loose-bound",
    "projection-identity",
    "node-gradients",
    "softmax-gradients",
];
const DATA_CHECKS: [&str; 2] = ["conditional-decomposition", "pinsker"];

/// Class counts of the random instances.
pub const K_RANGE: std::ops::RangeInclusive<usize> = 2..=10;
/// Random inputs per parameter set in the projection check.
pub const PROJECTION_INPUTS: usize = 100;
pub const GRADIENT_STEP: f64 = 1e-5;
pub const GRADIENT_TOL: f64 = 1e-4;
/// Gradient instances: `max(20, trials / 10)`.
pub const MIN_GRADIENT_TRIALS: usize = 20;

#[derive(Serialize)]
struct CheckSummary {
    name: String,
    kind: CheckKind,
    tolerance: f64,
    trials: usize,
    max_violation: f64,
    max_slack: f64,
    passed: bool,
    worst_trial: Option<usize>,
    worst_inputs: Option<serde_json::Value>,
}

impl From<TheoremCheckResult> for CheckSummary {
    fn from(r: TheoremCheckResult) -> Self {
        Self {
            name: r.name,
            kind: r.kind,
            tolerance: r.tolerance,
            trials: r.trials,
            max_violation: r.max_violation,
            max_slack: r.max_slack,
            passed: r.passed,
            worst_trial: if r.passed { None } else { r.worst_trial },
            worst_inputs: if r.passed { None } else { r.worst_inputs },
        }
    }
}

#[derive(Serialize)]
struct VerifyReport {
    seed: u64,
    trials: usize,
    fault: Fault,
    passed: bool,
    checks: Vec<CheckSummary>,
}

fn selected(suite: &str, with_data: bool) -> CliResult<Vec<&'static str>> {
    let mut out = Vec::new();
    for name in suite.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if name == "all" {
            out.extend(RANDOM_CHECKS);
            if with_data {
                out.extend(DATA_CHECKS);
            }
            continue;
        }
        let known = RANDOM_CHECKS
            .iter()
            .chain(&DATA_CHECKS)
            .find(|&&c| c == name)
            .ok_or_else(|| CliError::Config(format!("unknown check {name:?}")))?;
        out.push(*known);
    }
    let mut seen = std::collections::BTreeSet::new();
    out.retain(|c| seen.insert(*c));
    if out.is_empty() {
        return Err(CliError::Config("empty --suite".into()));
    }
    Ok(out)
}

struct DataInputs {
    model: Model,
    data: logloss_mc::LabeledDataset<f64>,
}

fn data_inputs(args: &VerifyArgs) -> CliResult<DataInputs> {
    let (Some(dir), Some(model_path)) = (&args.data, &args.model) else {
        return Err(CliError::Config("data checks need --data and --model".into()));
    };
    let model = load_model(model_path)?;
    let data = load_split(dir, TEST_FILE)?;
    check_shape(&model, &data, "test")?;
    Ok(DataInputs { model, data })
}

fn run_check(name: &str, args: &VerifyArgs, fault: Fault, inputs: &mut Option<DataInputs>) -> CliResult<TheoremCheckResult> {
    let (trials, seed) = (args.trials, args.seed);
    let grad_trials = MIN_GRADIENT_TRIALS.max(trials / 10);
    let result = match name {
        "ova-bound" => check_ova_bound(trials, K_RANGE, seed)?,
        "tree-decomposition" => check_tree_decomposition_with(trials, K_RANGE, TreeSampler::Random, seed, fault)?,
        "cova-decomposition" => check_cova_decomposition(trials, K_RANGE, seed)?,
        "dpi-loose-bound" => check_dpi_loose_bound(trials, K_RANGE, seed)?,
        "projection-identity" => check_projection_identity(trials, PROJECTION_INPUTS, K_RANGE, seed)?,
        "node-gradients" => gradient_check_result(
            "node-gradients",
            &check_node_loss_gradients(grad_trials, GRADIENT_STEP, GRADIENT_TOL, seed),
        ),
        "softmax-gradients" => gradient_check_result(
            "softmax-gradients",
            &check_softmax_gradients(grad_trials, GRADIENT_STEP, GRADIENT_TOL, seed),
        ),
        data_check => {
            if inputs.is_none() {
                *inputs = Some(data_inputs(args)?);
            }
            let DataInputs { model, data } = inputs.as_ref().expect("loaded above");
            let scorer = model.scorer()?;
            if data_check == "pinsker" {
                let Model::Ova(binaries) = model else {
                    return Err(CliError::Config(format!("pinsker needs an ova model, got {}", model.kind())));
                };
                check_pinsker_zero_one(data, binaries)?
            } else {
                let tree = match model.tree() {
                    Some(t) => t.clone(),
                    None => resolve_tree(&args.tree, data.num_classes())?,
                };
                check_conditional_decomposition(data, &tree, &scorer)?
            }
        }
    };
    Ok(result)
}

fn sci(v: f64) -> String {
    format!("{v:.3e}")
}

pub fn run(args: &VerifyArgs) -> CliResult<()> {
    if args.trials == 0 {
        return Err(CliError::Config("--trials must be at least 1".into()));
    }
    let fault = match args.fault {
        FaultArg::None => Fault::None,
        FaultArg::RotateNodeEstimates => Fault::RotateNodeEstimates,
    };
    let with_data = args.data.is_some() && args.model.is_some();
    let names = selected(&args.suite, with_data)?;
    let mut inputs = None;
    let mut table = Table::new(
        Some(format!("verify: seed {}, {} trials, fault {}", args.seed, args.trials, fault_name(fault))),
        &["check", "kind", "trials", "tolerance", "max-violation", "max-slack", "result"],
    );
    let mut checks = Vec::new();
    for name in names {
        let r = run_check(name, args, fault, &mut inputs)?;
        table.push(vec![
            r.name.clone(),
            match r.kind {
                CheckKind::Inequality => "inequality".into(),
                CheckKind::Equality => "equality".into(),
            },
            r.trials.to_string(),
            sci(r.tolerance),
            sci(r.max_violation),
            sci(r.max_slack),
            if r.passed { "PASS" } else { "FAIL" }.into(),
        ]);
        checks.push(CheckSummary::from(r));
    }
    let passed = checks.iter().all(|c| c.passed);
    print!("{}", render_all(&[table], args.format));
    let report = VerifyReport {
        seed: args.seed,
        trials: args.trials,
        fault,
        passed,
        checks,
    };
    if let Some(path) = &args.report {
        write_json(path, &report)?;
    }
    if !passed {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        return Err(CliError::Verification(failed.join(", ")));
    }
    if args.format == Format::Text {
        println!("all checks passed");
    }
    Ok(())
}

fn fault_name(f: Fault) -> &'static str {
    match f {
        Fault::None => "none",
        Fault::RotateNodeEstimates => "rotate-node-estimates",
    }
}
