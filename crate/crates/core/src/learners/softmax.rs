use super::sgd::{mean_loss, run_sgd};
use super::TrainConfig;
use crate::compose::SoftmaxParams;
use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::scalar::{dot, log_sum_exp, Scalar};

const SOFTMAX_KEY: u64 = 0x736f_6674;

#[derive(Clone, Debug)]
pub struct SoftmaxFit<S> {
    pub params: SoftmaxParams<S>,
    pub initial_loss: S,
    pub final_loss: S,
    /// Epoch of the returned checkpoint.
    pub epoch: usize,
}

/// Per-sample `−log softmax_y`. `flat` holds `K` weight vectors of width `dim`.
fn sample_loss<S: Scalar>(flat: &[S], dim: usize, x: &[S], y: usize, scores: &mut [S]) -> S {
    for (s, b) in scores.iter_mut().zip(flat.chunks(dim)) {
        *s = dot(b, x);
    }
    log_sum_exp(scores) - scores[y]
}

/// Adds `(softmax_j − 1[j = y]) x` to each class block of `grad`.
fn sample_grad<S: Scalar>(flat: &[S], dim: usize, x: &[S], y: usize, grad: &mut [S]) {
    let mut scores: Vec<S> = flat.chunks(dim).map(|b| dot(b, x)).collect();
    let lse = log_sum_exp(&scores);
    for (j, s) in scores.iter_mut().enumerate() {
        *s = (*s - lse).exp() - if j == y { S::one() } else { S::zero() };
    }
    for (g, &r) in grad.chunks_mut(dim).zip(&scores) {
        for (gv, &xv) in g.iter_mut().zip(x) {
            *gv += r * xv;
        }
    }
}

fn flatten<S: Scalar>(params: &SoftmaxParams<S>) -> Vec<S> {
    params.betas().iter().flatten().copied().collect()
}

fn unflatten<S: Scalar>(flat: Vec<S>, dim: usize) -> Result<SoftmaxParams<S>> {
    SoftmaxParams::new(flat.chunks(dim).map(<[S]>::to_vec).collect())
}

fn check_shapes<S: Scalar>(params: &SoftmaxParams<S>, data: &LabeledDataset<S>) -> Result<()> {
    if params.num_classes() != data.num_classes() || params.dim() != data.dim() {
        return Err(Error::ShapeMismatch(format!(
            "softmax model is {}×{}, dataset is {}×{}",
            params.num_classes(),
            params.dim(),
            data.num_classes(),
            data.dim()
        )));
    }
    Ok(())
}

/// Mean multiclass log-loss of the softmax model over `data`.
pub fn softmax_loss<S: Scalar>(params: &SoftmaxParams<S>, data: &LabeledDataset<S>) -> Result<S> {
    check_shapes(params, data)?;
    let flat = flatten(params);
    let (k, dim) = (params.num_classes(), params.dim());
    Ok(mean_loss(data.len(), |i| {
        let mut scores = vec![S::zero(); k];
        sample_loss(&flat, dim, data.row(i), data.labels()[i], &mut scores)
    }))
}

/// Summed multiclass log-loss and its gradient, one vector per class.
pub fn softmax_loss_and_grads<S: Scalar>(
    params: &SoftmaxParams<S>,
    data: &LabeledDataset<S>,
) -> Result<(S, Vec<Vec<S>>)> {
    check_shapes(params, data)?;
    let flat = flatten(params);
    let (k, dim) = (params.num_classes(), params.dim());
    let mut grad = vec![S::zero(); flat.len()];
    let mut scores = vec![S::zero(); k];
    let mut loss = S::zero();
    for i in 0..data.len() {
        let (x, y) = (data.row(i), data.labels()[i]);
        loss += sample_loss(&flat, dim, x, y, &mut scores);
        sample_grad(&flat, dim, x, y, &mut grad);
    }
    Ok((loss, grad.chunks(dim).map(<[S]>::to_vec).collect()))
}

/// Softmax regression from zero weights.
pub fn train_softmax<S: Scalar>(data: &LabeledDataset<S>, cfg: &TrainConfig) -> Result<SoftmaxFit<S>> {
    if let Some(c) = data.class_counts().iter().position(|&n| n == 0) {
        return Err(Error::MissingClass(c));
    }
    train_softmax_from(data, &SoftmaxParams::zeros(data.num_classes(), data.dim())?, cfg)
}

/// Softmax regression continuing from `init`.
pub fn train_softmax_from<S: Scalar>(
    data: &LabeledDataset<S>,
    init: &SoftmaxParams<S>,
    cfg: &TrainConfig,
) -> Result<SoftmaxFit<S>> {
    cfg.validate()?;
    check_shapes(init, data)?;
    if data.is_empty() {
        return Err(Error::ShapeMismatch("empty training set".into()));
    }
    let (k, dim) = (init.num_classes(), init.dim());
    let mut rng = stream(cfg.seed, &[SOFTMAX_KEY]);
    let out = run_sgd(
        flatten(init),
        data.len(),
        cfg,
        &mut rng,
        |w, i, grad| sample_grad(w, dim, data.row(i), data.labels()[i], grad),
        |w| {
            mean_loss(data.len(), |i| {
                let mut scores = vec![S::zero(); k];
                sample_loss(w, dim, data.row(i), data.labels()[i], &mut scores)
            })
        },
    );
    Ok(SoftmaxFit {
        params: unflatten(out.params, dim)?,
        initial_loss: out.initial_loss,
        final_loss: out.final_loss,
        epoch: out.epoch,
    })
}
