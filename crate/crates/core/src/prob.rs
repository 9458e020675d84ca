//! Log-loss, regret, and divergences between categorical and Bernoulli laws.
//!
//! Every quantity is in nats. Terms with zero true mass contribute zero
//! (`0 log 0 = 0`); a zero estimate where the truth has mass is an error on
//! these exact paths. Only [`empirical_report`] clamps probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tolerance on `|Σ p − 1|` accepted by [`Categorical::new`].
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Lower clamp applied to assigned probabilities in [`empirical_report`].
pub const EVAL_CLAMP: f64 = 1e-12;

/// A probability vector over `K ≥ 2` classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Categorical<S> {
    probs: Vec<S>,
}

impl<S: Scalar> Categorical<S> {
    /// Validates and renormalizes `probs` so it sums to one.
    pub fn new(probs: Vec<S>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidDistribution(format!(
                "need at least 2 classes, got {}",
                probs.len()
            )));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !(p >= S::zero() && p <= S::one()) {
                return Err(Error::InvalidDistribution(format!(
                    "entry {i} = {p} outside [0, 1]"
                )));
            }
        }
        let total: S = probs.iter().copied().sum();
        if (total - S::one()).abs() > S::lit(NORMALIZATION_TOL) {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {total}, not 1"
            )));
        }
        Ok(Self::renormalized(probs, total))
    }

    /// Uniform distribution over `k` classes.
    pub fn uniform(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidK(k));
        }
        Ok(Self {
            probs: vec![S::one() / S::from_count(k); k],
        })
    }

    /// Normalizes nonnegative weights. Caller guarantees a positive total.
    pub(crate) fn from_weights(mut weights: Vec<S>) -> Self {
        let total: S = weights.iter().copied().sum();
        for w in &mut weights {
            *w /= total;
        }
        Self { probs: weights }
    }

    /// Wraps a vector produced by an exact composition (product of node
    /// probabilities along codeword paths) that already sums to one.
    pub(crate) fn from_composed(probs: Vec<S>) -> Self {
        Self { probs }
    }

    fn renormalized(mut probs: Vec<S>, total: S) -> Self {
        if total != S::one() {
            for p in &mut probs {
                *p /= total;
            }
        }
        Self { probs }
    }

    pub fn probs(&self) -> &[S] {
        &self.probs
    }

    pub fn into_vec(self) -> Vec<S> {
        self.probs
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> S {
        self.probs
            .iter()
            .filter(|&&p| p > S::zero())
            .map(|&p| -p * p.ln())
            .sum()
    }

    pub fn cast<T: Scalar>(&self) -> Categorical<T> {
        Categorical {
            probs: self.probs.iter().map(|p| T::lit(p.as_f64())).collect(),
        }
    }
}

/// First index of the maximum; ties resolve toward the lowest index.
pub fn argmax<S: Scalar>(values: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Success probability of a Bernoulli variable.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct BinaryProb<S>(S);

impl<S: Scalar> BinaryProb<S> {
    pub fn new(p: S) -> Result<Self> {
        if p >= S::zero() && p <= S::one() {
            Ok(Self(p))
        } else {
            Err(Error::InvalidProbability(p.as_f64()))
        }
    }

    #[inline]
    pub fn value(self) -> S {
        self.0
    }
}

/// Summary of a soft classifier evaluated on labeled samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport<S> {
    /// Mean `−log q_n(y_n)` in nats.
    pub log_loss: S,
    /// `log_loss` minus the mean log-loss of the true posteriors.
    pub regret: Option<S>,
    pub zero_one_error: S,
    /// Mean log-loss of the true posteriors, when supplied.
    pub optimal_log_loss: Option<S>,
    /// Error rate of the argmax of the true posteriors, when supplied.
    pub bayes_zero_one_error: Option<S>,
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, got })
    }
}

/// `Σ_i p_i log(1/q_i)`.
pub fn cross_entropy<S: Scalar>(p: &Categorical<S>, q: &Categorical<S>) -> Result<S> {
    check_len(p.num_classes(), q.num_classes())?;
    let mut total = S::zero();
    for (i, (&pi, &qi)) in p.probs.iter().zip(&q.probs).enumerate() {
        if pi == S::zero() {
            continue;
        }
        if qi == S::zero() {
            return Err(support_mismatch(i, pi, qi));
        }
        total -= pi * qi.ln();
    }
    Ok(total)
}

/// `D(p‖q) = Σ_i p_i log(p_i/q_i)`, the regret of predicting with `q`.
pub fn kl_divergence<S: Scalar>(p: &Categorical<S>, q: &Categorical<S>) -> Result<S> {
    check_len(p.num_classes(), q.num_classes())?;
    let mut total = S::zero();
    for (i, (&pi, &qi)) in p.probs.iter().zip(&q.probs).enumerate() {
        if pi == S::zero() {
            continue;
        }
        if qi == S::zero() {
            return Err(support_mismatch(i, pi, qi));
        }
        total += pi * (pi / qi).ln();
    }
    Ok(total)
}

/// Binary divergence `d(p‖q)` between `Ber(p)` and `Ber(q)`.
pub fn binary_divergence<S: Scalar>(p: BinaryProb<S>, q: BinaryProb<S>) -> Result<S> {
    let (p, q) = (p.value(), q.value());
    let (one, zero) = (S::one(), S::zero());
    let mut total = zero;
    if p > zero {
        if q == zero {
            return Err(support_mismatch(1, p, q));
        }
        total += p * (p / q).ln();
    }
    if p < one {
        if q == one {
            return Err(support_mismatch(0, p, q));
        }
        total += (one - p) * ((one - p) / (one - q)).ln();
    }
    Ok(total)
}

/// Binary log-loss `ℓ(p, q) = p log(1/q) + (1−p) log(1/(1−q))`.
pub fn binary_log_loss<S: Scalar>(p: BinaryProb<S>, q: BinaryProb<S>) -> Result<S> {
    Ok(binary_divergence(p, q)? + binary_entropy(p))
}

/// `h(p)` in nats, with `h(0) = h(1) = 0`.
pub fn binary_entropy<S: Scalar>(p: BinaryProb<S>) -> S {
    let p = p.value();
    let one = S::one();
    let mut h = S::zero();
    if p > S::zero() {
        h -= p * p.ln();
    }
    if p < one {
        h -= (one - p) * (one - p).ln();
    }
    h
}

fn support_mismatch<S: Scalar>(index: usize, p: S, q: S) -> Error {
    Error::SupportMismatch {
        index,
        p: p.as_f64(),
        q: q.as_f64(),
    }
}

/// Evaluates per-sample assignments against realized labels.
///
/// Assigned probabilities are clamped below at [`EVAL_CLAMP`] before the
/// logarithm so the result is always finite. The true posteriors, when
/// given, are clamped the same way.
pub fn empirical_report<S: Scalar>(
    assignments: &[Categorical<S>],
    labels: &[usize],
    true_posteriors: Option<&[Categorical<S>]>,
) -> Result<LossReport<S>> {
    check_len(assignments.len(), labels.len())?;
    if let Some(post) = true_posteriors {
        check_len(assignments.len(), post.len())?;
    }
    let n = labels.len();
    if n == 0 {
        return Err(Error::LengthMismatch {
            expected: 1,
            got: 0,
        });
    }
    let clamp = S::lit(EVAL_CLAMP);
    let nll = |q: &Categorical<S>, y: usize| -> Result<S> {
        let k = q.num_classes();
        let p = q.probs.get(y).ok_or(Error::LabelOutOfRange { label: y, classes: k })?;
        Ok(-p.max(clamp).ln())
    };

    let mut loss = S::zero();
    let mut errors = 0usize;
    for (q, &y) in assignments.iter().zip(labels) {
        loss += nll(q, y)?;
        if q.argmax() != y {
            errors += 1;
        }
    }
    let n_s = S::from_count(n);
    let log_loss = loss / n_s;
    let zero_one_error = S::from_count(errors) / n_s;

    let (regret, optimal_log_loss, bayes_zero_one_error) = match true_posteriors {
        Some(post) => {
            let mut opt = S::zero();
            let mut bayes_errors = 0usize;
            for (p, &y) in post.iter().zip(labels) {
                opt += nll(p, y)?;
                if p.argmax() != y {
                    bayes_errors += 1;
                }
            }
            let opt = opt / n_s;
            (
                Some(log_loss - opt),
                Some(opt),
                Some(S::from_count(bayes_errors) / n_s),
            )
        }
        None => (None, None, None),
    };

    Ok(LossReport {
        log_loss,
        regret,
        zero_one_error,
        optimal_log_loss,
        bayes_zero_one_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cat(v: &[f64]) -> Categorical<f64> {
        Categorical::new(v.to_vec()).unwrap()
    }

    fn bp(p: f64) -> BinaryProb<f64> {
        BinaryProb::new(p).unwrap()
    }

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn categorical_rejects_bad_inputs() {
        assert!(Categorical::new(vec![1.0_f64]).is_err());
        assert!(Categorical::new(vec![0.5_f64, 0.6]).is_err());
        assert!(Categorical::new(vec![-0.1_f64, 1.1]).is_err());
        assert!(Categorical::new(vec![f64::NAN, 1.0]).is_err());
        let c = Categorical::new(vec![0.5_f64, 0.5 + 5e-10]).unwrap();
        let s: f64 = c.probs().iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_examples() {
        assert!((cross_entropy(&cat(&[0.5, 0.5]), &cat(&[0.5, 0.5])).unwrap() - LN2).abs() < 1e-15);
        assert_eq!(cross_entropy(&cat(&[1.0, 0.0]), &cat(&[1.0, 0.0])).unwrap(), 0.0);
        let v = cross_entropy(&cat(&[0.8, 0.2]), &cat(&[0.5, 0.5])).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_errors() {
        assert!(matches!(
            cross_entropy(&cat(&[0.5, 0.5]), &cat(&[1.0, 0.0])),
            Err(Error::SupportMismatch { index: 1, .. })
        ));
        assert!(matches!(
            cross_entropy(&cat(&[0.5, 0.5]), &cat(&[0.2, 0.3, 0.5])),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&cat(&[0.3, 0.7]), &cat(&[0.3, 0.7])).unwrap(), 0.0);
        let v = kl_divergence(&cat(&[0.8, 0.2]), &cat(&[0.5, 0.5])).unwrap();
        assert!((v - 0.192_744_757_021_757_53).abs() < 1e-12);
        let v = kl_divergence(&cat(&[0.5, 0.3, 0.2]), &cat(&[0.4, 0.3, 0.3])).unwrap();
        assert!((v - 0.030_478_754_035_472_025).abs() < 1e-12);
    }

    #[test]
    fn binary_divergence_examples() {
        assert_eq!(binary_divergence(bp(0.25), bp(0.25)).unwrap(), 0.0);
        assert!((binary_divergence(bp(0.8), bp(0.6)).unwrap() - 0.091_516_221_849_435_75).abs() < 1e-12);
        assert!((binary_divergence(bp(0.2), bp(0.6)).unwrap() - 0.334_795_286_714_334_3).abs() < 1e-12);
        assert_eq!(binary_divergence(bp(1.0), bp(1.0)).unwrap(), 0.0);
        assert_eq!(binary_divergence(bp(0.0), bp(0.0)).unwrap(), 0.0);
        assert!(binary_divergence(bp(0.3), bp(0.0)).is_err());
        assert!(binary_divergence(bp(0.3), bp(1.0)).is_err());
    }

    #[test]
    fn binary_entropy_examples() {
        assert!((binary_entropy(bp(0.5)) - LN2).abs() < 1e-15);
        assert_eq!(binary_entropy(bp(0.0)), 0.0);
        assert_eq!(binary_entropy(bp(1.0)), 0.0);
        assert!((binary_entropy(bp(0.1)) - 0.325_082_973_391_448_2).abs() < 1e-12);
        assert!(BinaryProb::new(1.5_f64).is_err());
    }

    #[test]
    fn report_with_exact_posteriors_has_zero_regret() {
        let q = vec![cat(&[0.2, 0.8]), cat(&[0.6, 0.4])];
        let r = empirical_report(&q, &[1, 1], Some(&q)).unwrap();
        assert_eq!(r.regret, Some(0.0));
        assert_eq!(r.zero_one_error, 0.5);
        assert_eq!(r.bayes_zero_one_error, Some(0.5));
    }

    #[test]
    fn report_single_sample() {
        let r = empirical_report(&[cat(&[0.5, 0.5])], &[0], Some(&[cat(&[1.0, 0.0])])).unwrap();
        assert!((r.log_loss - LN2).abs() < 1e-15);
        assert!((r.regret.unwrap() - LN2).abs() < 1e-15);
        // tie goes to class 0, which is the label
        assert_eq!(r.zero_one_error, 0.0);
    }

    #[test]
    fn report_three_samples_is_mean_nll() {
        let q = vec![cat(&[0.7, 0.2, 0.1]), cat(&[0.2, 0.3, 0.5]), cat(&[0.25, 0.25, 0.5])];
        let r = empirical_report(&q, &[0, 2, 2], None).unwrap();
        // (-ln .7 - ln .5 - ln .5)/3
        let expected = (-(0.7f64).ln() - 2.0 * (0.5f64).ln()) / 3.0;
        assert!((r.log_loss - expected).abs() < 1e-15);
        assert!(r.regret.is_none());
        assert_eq!(r.zero_one_error, 0.0);
    }

    #[test]
    fn report_errors() {
        let q = vec![cat(&[0.5, 0.5])];
        assert!(matches!(empirical_report(&q, &[0, 1], None), Err(Error::LengthMismatch { .. })));
        assert!(matches!(empirical_report(&q, &[2], None), Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn report_clamps_zero_probability() {
        let r = empirical_report(&[cat(&[1.0, 0.0])], &[1], None).unwrap();
        assert!(r.log_loss.is_finite());
        assert!((r.log_loss - (-(1e-12f64).ln())).abs() < 1e-9);
    }

    fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(1e-6..1.0f64, k).prop_map(|w| {
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
    }

    fn independent_entropy(p: &[f64]) -> f64 {
        let mut h = 0.0;
        for &x in p {
            if x > 0.0 {
                h += x * (1.0 / x).ln();
            }
        }
        h
    }

    proptest! {
        #[test]
        fn divergences_are_nonnegative((p, q) in (2usize..12).prop_flat_map(|k| (simplex(k), simplex(k)))) {
            let (p, q) = (cat(&p), cat(&q));
            prop_assert!(kl_divergence(&p, &q).unwrap() >= -1e-12);
        }

        #[test]
        fn binary_divergence_nonnegative(p in 0.0..=1.0f64, q in 1e-9..(1.0 - 1e-9f64)) {
            prop_assert!(binary_divergence(bp(p), bp(q)).unwrap() >= -1e-12);
        }

        #[test]
        fn two_class_kl_is_binary_divergence(p in 0.0..=1.0f64, q in 1e-6..(1.0 - 1e-6f64)) {
            let kl = kl_divergence(&cat(&[p, 1.0 - p]), &cat(&[q, 1.0 - q])).unwrap();
            let d = binary_divergence(bp(p), bp(q)).unwrap();
            prop_assert!((kl - d).abs() <= 1e-12);
        }

        #[test]
        fn self_cross_entropy_is_entropy(p in (2usize..12).prop_flat_map(simplex)) {
            let c = cat(&p);
            let ce = cross_entropy(&c, &c).unwrap();
            prop_assert!((ce - independent_entropy(c.probs())).abs() <= 1e-12);
        }

        #[test]
        fn report_is_always_finite(
            raw in prop::collection::vec((0.0..=1.0f64, 0usize..3), 1..20)
        ) {
            let q: Vec<_> = raw.iter().map(|&(a, _)| cat(&[a, 1.0 - a, 0.0])).collect();
            let y: Vec<_> = raw.iter().map(|&(_, y)| y).collect();
            let r = empirical_report(&q, &y, Some(&q)).unwrap();
            prop_assert!(r.log_loss.is_finite());
            prop_assert!(r.regret.unwrap().is_finite());
        }
    }
}
