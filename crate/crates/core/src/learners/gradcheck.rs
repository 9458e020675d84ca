use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{make_node_trainset, node_loss_and_grads, softmax_loss_and_grads};
use crate::compose::SoftmaxParams;
use crate::datasets::LabeledDataset;
use crate::rng::{stream, StreamRng};
use crate::scalar::Scalar;
use crate::tree::random_tree;

/// Denominator floor for relative errors of near-zero gradient coordinates.
const REL_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub trials: usize,
    pub coordinates: usize,
    pub max_rel_error: f64,
    pub tol: f64,
    pub passed: bool,
}

/// `|a − b| / max(|a|, |b|, 1e-3)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares analytic gradients with central differences.
///
/// `generate` draws one random instance: a parameter vector and a function
/// returning `(loss, gradient)` at any parameter vector.
pub fn check_gradients<S, F, G>(mut generate: G, trials: usize, step: f64, tol: f64, seed: u64) -> GradCheckReport
where
    S: Scalar,
    F: Fn(&[S]) -> (S, Vec<S>),
    G: FnMut(&mut StreamRng) -> (Vec<S>, F),
{
    assert!(step > 0.0 && tol > 0.0, "step and tolerance must be positive");
    let mut max_rel_error = 0.0f64;
    let mut coordinates = 0;
    for t in 0..trials {
        let mut rng = stream(seed, &[t as u64]);
        let (params, f) = generate(&mut rng);
        let (_, grad) = f(&params);
        assert_eq!(grad.len(), params.len(), "gradient length must match parameters");
        let mut probe = params.clone();
        let h = S::lit(step);
        for c in 0..params.len() {
            probe[c] = params[c] + h;
            let up = f(&probe).0;
            probe[c] = params[c] - h;
            let down = f(&probe).0;
            probe[c] = params[c];
            let numeric = (up - down).as_f64() / (2.0 * step);
            max_rel_error = max_rel_error.max(relative_error(grad[c].as_f64(), numeric));
            coordinates += 1;
        }
    }
    GradCheckReport {
        trials,
        coordinates,
        max_rel_error,
        tol,
        passed: max_rel_error <= tol,
    }
}

/// A small dataset with every class present and Gaussian features.
fn random_dataset(rng: &mut StreamRng, k: usize) -> LabeledDataset<f64> {
    let d = rng.random_range(2..=4);
    let n = rng.random_range(k.max(8)..=20);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let labels = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
    LabeledDataset::from_raw_rows(&rows, labels, k, None).expect("valid random dataset")
}

fn normal_vec(rng: &mut StreamRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Gradient check of the node loss on random trees, nodes, data and weights.
pub fn check_node_loss_gradients(trials: usize, step: f64, tol: f64, seed: u64) -> GradCheckReport {
    check_node_loss_with(trials, step, tol, seed, |_| {})
}

/// As [`check_node_loss_gradients`], with `corrupt` applied to each analytic
/// gradient before comparison.
pub fn check_node_loss_with(
    trials: usize,
    step: f64,
    tol: f64,
    seed: u64,
    corrupt: impl Fn(&mut Vec<f64>) + Copy,
) -> GradCheckReport {
    check_gradients(
        |rng| {
            let k = rng.random_range(2..=7);
            let tree = random_tree(k, rng).expect("valid tree");
            let data = random_dataset(rng, k);
            let node = rng.random_range(0..tree.num_nodes());
            let classes = tree.nodes()[node].subset().to_vec();
            let dim = data.dim();
            let params = normal_vec(rng, classes.len() * dim);
            let f = move |flat: &[f64]| {
                let gammas: BTreeMap<usize, Vec<f64>> =
                    classes.iter().copied().zip(flat.chunks(dim).map(<[f64]>::to_vec)).collect();
                let set = make_node_trainset(&data, &tree, node).expect("node has samples");
                let (loss, grads) = node_loss_and_grads(&gammas, &set, &tree).expect("params cover node");
                let mut g: Vec<f64> = grads.into_values().flatten().collect();
                corrupt(&mut g);
                (loss, g)
            };
            (params, f)
        },
        trials,
        step,
        tol,
        seed,
    )
}

/// Gradient check of the softmax loss on random data and weights.
pub fn check_softmax_gradients(trials: usize, step: f64, tol: f64, seed: u64) -> GradCheckReport {
    check_gradients(
        |rng| {
            let k = rng.random_range(2..=7);
            let data = random_dataset(rng, k);
            let dim = data.dim();
            let params = normal_vec(rng, k * dim);
            let f = move |flat: &[f64]| {
                let p = SoftmaxParams::new(flat.chunks(dim).map(<[f64]>::to_vec).collect()).expect("finite weights");
                let (loss, grads) = softmax_loss_and_grads(&p, &data).expect("shapes agree");
                (loss, grads.into_iter().flatten().collect())
            };
            (params, f)
        },
        trials,
        step,
        tol,
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_loss_gradients_match_finite_differences() {
        let r = check_node_loss_gradients(20, 1e-5, 1e-5, 1);
        assert!(r.passed, "{r:?}");
        assert_eq!(r.trials, 20);
        assert!(r.coordinates > 0);
    }

    #[test]
    fn softmax_gradients_match_finite_differences() {
        let r = check_softmax_gradients(20, 1e-5, 1e-4, 2);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn sign_flip_is_detected() {
        let r = check_node_loss_with(5, 1e-5, 1e-4, 3, |g| g[0] = -g[0]);
        assert!(!r.passed);
    }

    #[test]
    fn quadratic_is_exact() {
        let r = check_gradients(
            |rng| {
                let p: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
                (p, |x: &[f64]| (x.iter().map(|v| v * v).sum::<f64>(), x.iter().map(|v| 2.0 * v).collect()))
            },
            4,
            1e-4,
            1e-8,
            0,
        );
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-6, 0.0) - 1e-3).abs() < 1e-15);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }
}
