use nalgebra::{DMatrix, DVector};

use crate::compose::SoftmaxParams;
use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Rows whose smallest posterior is below this carry no usable log-ratio.
const MIN_POSTERIOR: f64 = 1e-250;

/// Fits softmax weights to the dataset's exact posteriors.
///
/// Regresses the centered log-posteriors `log p_j(x) − mean_k log p_k(x)`
/// on the features by least squares. When the posteriors are log-linear in
/// `x` (equal-covariance Gaussian classes) the fit is exact up to rounding.
pub fn fit_log_linear_posteriors<S: Scalar>(data: &LabeledDataset<S>) -> Result<SoftmaxParams<S>> {
    if !data.has_posteriors() {
        return Err(Error::MissingPosteriors);
    }
    let (k, dim) = (data.num_classes(), data.dim());
    let mut gram = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DMatrix::<f64>::zeros(dim, k);
    let mut logs = vec![0.0; k];
    let mut used = 0usize;
    for i in 0..data.len() {
        let post = data.posterior(i).expect("posteriors present");
        if post.iter().any(|p| p.as_f64() < MIN_POSTERIOR) {
            continue;
        }
        for (l, p) in logs.iter_mut().zip(post) {
            *l = p.as_f64().ln();
        }
        let mean = logs.iter().sum::<f64>() / k as f64;
        let x: Vec<f64> = data.row(i).iter().map(|v| v.as_f64()).collect();
        for a in 0..dim {
            for b in 0..dim {
                gram[(a, b)] += x[a] * x[b];
            }
            for j in 0..k {
                rhs[(a, j)] += x[a] * (logs[j] - mean);
            }
        }
        used += 1;
    }
    if used < dim {
        return Err(Error::ShapeMismatch(format!(
            "{used} usable rows cannot determine {dim} coefficients"
        )));
    }
    let svd = gram.svd(true, true);
    let mut betas = Vec::with_capacity(k);
    for j in 0..k {
        let col: DVector<f64> = rhs.column(j).into_owned();
        let sol = svd
            .solve(&col, 1e-12)
            .map_err(|e| Error::InvalidConfig(format!("least-squares solve failed: {e}")))?;
        betas.push(sol.iter().map(|&v| S::lit(v)).collect());
    }
    SoftmaxParams::new(betas)
}
