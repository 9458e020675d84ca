use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::TrainConfig;
use crate::rng::StreamRng;
use crate::scalar::Scalar;

/// Rows per chunk when summing a full-data loss; fixed so the summation
/// order does not depend on the thread pool.
const LOSS_CHUNK: usize = 4096;

/// Result of one SGD run over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct SgdOutcome<S> {
    pub params: Vec<S>,
    /// Mean training loss at the initial parameters.
    pub initial_loss: S,
    /// Mean training loss at the returned parameters.
    pub final_loss: S,
    /// Epoch of the returned checkpoint (0 = initial parameters).
    pub epoch: usize,
}

/// Mean of `per_sample(params, i)` over `0..n`, summed in fixed chunks.
pub(crate) fn mean_loss<S: Scalar>(n: usize, per_sample: impl Fn(usize) -> S + Sync) -> S {
    if n == 0 {
        return S::zero();
    }
    let starts: Vec<usize> = (0..n).step_by(LOSS_CHUNK).collect();
    let partial: Vec<S> = starts
        .par_iter()
        .map(|&s| (s..(s + LOSS_CHUNK).min(n)).map(&per_sample).sum())
        .collect();
    partial.into_iter().sum::<S>() / S::from_count(n)
}

/// Mini-batch SGD with per-epoch Fisher-Yates shuffling.
///
/// `accumulate(params, sample, grad)` adds one sample's loss gradient into
/// `grad`; `loss(params)` returns the mean loss over all `n` samples.
pub(crate) fn run_sgd<S: Scalar>(
    init: Vec<S>,
    n: usize,
    cfg: &TrainConfig,
    rng: &mut StreamRng,
    accumulate: impl Fn(&[S], usize, &mut [S]),
    loss: impl Fn(&[S]) -> S,
) -> SgdOutcome<S> {
    let initial_loss = loss(&init);
    let mut best = (init.clone(), initial_loss, 0usize);
    let mut params = init;
    let mut last_loss = initial_loss;
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![S::zero(); params.len()];
    let lr = S::lit(cfg.learning_rate);

    for epoch in 1..=cfg.epochs {
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = S::zero());
            for &i in batch {
                accumulate(&params, i, &mut grad);
            }
            let step = lr / S::from_count(batch.len());
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= step * *g;
            }
        }
        if cfg.keep_best {
            last_loss = loss(&params);
            if last_loss < best.1 {
                best = (params.clone(), last_loss, epoch);
            }
        }
    }

    if cfg.keep_best {
        let (params, final_loss, epoch) = best;
        SgdOutcome {
            params,
            initial_loss,
            final_loss,
            epoch,
        }
    } else {
        if cfg.epochs > 0 {
            last_loss = loss(&params);
        }
        SgdOutcome {
            params,
            initial_loss,
            final_loss: last_loss,
            epoch: cfg.epochs,
        }
    }
}
