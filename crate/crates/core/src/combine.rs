//! Rules for combining per-source hypotheses into one hypothesis.
//!
//! Given sources `Q_1..Q_k` with hypotheses `h_1..h_k` on a shared support,
//! the distribution-weighted rule with simplex weights `z` predicts
//!
//! ```text
//! h_z(x) = sum_i z_i Q_i(x) h_i(x) / sum_j z_j Q_j(x)
//! ```
//!
//! and 0 where the denominator vanishes. The smoothed variant blends in a
//! uniform distribution `U` with weight `eta`, which keeps the denominator
//! positive everywhere and is the form whose worst-case mixture loss the
//! min-max solver controls:
//!
//! ```text
//! weight_i(x) = (lambda_i Q_i(x) + (eta/k) U(x)) / (sum_j lambda_j Q_j(x) + eta U(x))
//! ```
//!
//! The r-norm rule needs no weights at all: `weight_i(x) ~ Q_i(x)^r`. At
//! `r = 1` every source counts in proportion to its density; as `r` grows it
//! tends to selecting the pointwise argmax source (ties break to the lowest
//! index at `r = inf`). Large finite `r` is evaluated in log space so the
//! powers cannot overflow.

use std::sync::Arc;

use crate::model::{same_support, Dist, Hypothesis, SimplexWeights};
use crate::{Error, Result};

/// A combining rule with its parameters, as selected on the command line.
#[derive(Debug, Clone)]
pub enum CombineRule {
    DistributionWeighted { weights: SimplexWeights },
    Smoothed { weights: SimplexWeights, eta: f64 },
    RNorm { r: f64 },
}

/// Applies `rule` to the sources and hypotheses.
pub fn combine(sources: &[Dist], hyps: &[Hypothesis], rule: &CombineRule) -> Result<Hypothesis> {
    match rule {
        CombineRule::DistributionWeighted { weights } => {
            combine_distribution_weighted(sources, hyps, weights)
        }
        CombineRule::Smoothed { weights, eta } => combine_smoothed(sources, hyps, weights, *eta),
        CombineRule::RNorm { r } => combine_r_norm(sources, hyps, *r),
    }
}

fn validate_family(sources: &[Dist], hyps: &[Hypothesis]) -> Result<f64> {
    if sources.is_empty() {
        return Err(Error::Empty("sources"));
    }
    if hyps.len() != sources.len() {
        return Err(Error::LengthMismatch { expected: sources.len(), got: hyps.len() });
    }
    let support = sources[0].support();
    for q in sources {
        if !same_support(support, q.support()) {
            return Err(Error::SupportMismatch);
        }
    }
    let mut bound = 0.0f64;
    for h in hyps {
        if !same_support(support, h.support()) {
            return Err(Error::SupportMismatch);
        }
        bound = bound.max(h.range_bound());
    }
    Ok(bound)
}

/// The distribution-weighted rule `h_z`; predicts 0 where no source puts
/// mass.
pub fn combine_distribution_weighted(
    sources: &[Dist],
    hyps: &[Hypothesis],
    z: &SimplexWeights,
) -> Result<Hypothesis> {
    let bound = validate_family(sources, hyps)?;
    if z.len() != sources.len() {
        return Err(Error::LengthMismatch { expected: sources.len(), got: z.len() });
    }
    let support = sources[0].support();
    let n = support.len();
    let mut values = vec![0.0; n];
    for (x, value) in values.iter_mut().enumerate() {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &zi) in z.as_slice().iter().enumerate() {
            let m = zi * sources[i].probs()[x];
            num += m * hyps[i].values()[x];
            den += m;
        }
        if den > 0.0 {
            *value = (num / den).clamp(0.0, bound);
        }
    }
    Hypothesis::new(Arc::clone(support), values, bound)
}

/// The uniform-smoothed distribution-weighted rule `h_{lambda,eta}` with
/// `eta` in `[0, 1)`. At `eta = 0` it coincides with
/// [`combine_distribution_weighted`].
pub fn combine_smoothed(
    sources: &[Dist],
    hyps: &[Hypothesis],
    lambda: &SimplexWeights,
    eta: f64,
) -> Result<Hypothesis> {
    if !(eta.is_finite() && (0.0..1.0).contains(&eta)) {
        return Err(Error::InvalidParameter(format!("eta must lie in [0, 1), got {eta}")));
    }
    let bound = validate_family(sources, hyps)?;
    if lambda.len() != sources.len() {
        return Err(Error::LengthMismatch { expected: sources.len(), got: lambda.len() });
    }
    let support = sources[0].support();
    let n = support.len();
    let k = sources.len() as f64;
    let u = 1.0 / n as f64;
    let mut values = vec![0.0; n];
    for (x, value) in values.iter_mut().enumerate() {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &li) in lambda.as_slice().iter().enumerate() {
            let m = li * sources[i].probs()[x] + eta / k * u;
            num += m * hyps[i].values()[x];
            den += m;
        }
        if den > 0.0 {
            *value = (num / den).clamp(0.0, bound);
        }
    }
    Hypothesis::new(Arc::clone(support), values, bound)
}

/// The r-norm rule for `r >= 1`, including `r = inf` (pointwise argmax
/// source, ties to the lowest index). Predicts 0 where no source puts mass.
pub fn combine_r_norm(sources: &[Dist], hyps: &[Hypothesis], r: f64) -> Result<Hypothesis> {
    if !(r >= 1.0) {
        return Err(Error::InvalidParameter(format!("r must satisfy r >= 1, got {r}")));
    }
    let bound = validate_family(sources, hyps)?;
    let support = sources[0].support();
    let n = support.len();
    let k = sources.len();
    let mut values = vec![0.0; n];
    for (x, value) in values.iter_mut().enumerate() {
        if r.is_infinite() {
            let mut best = 0usize;
            let mut best_mass = sources[0].probs()[x];
            for (i, q) in sources.iter().enumerate().skip(1) {
                if q.probs()[x] > best_mass {
                    best = i;
                    best_mass = q.probs()[x];
                }
            }
            if best_mass > 0.0 {
                *value = hyps[best].values()[x];
            }
            continue;
        }
        // weight_i ~ Q_i^r, computed as exp(r (ln Q_i - ln Q_max)) so that
        // large r cannot overflow or underflow the whole point.
        let mut max_ln = f64::NEG_INFINITY;
        for q in sources {
            let p = q.probs()[x];
            if p > 0.0 {
                max_ln = max_ln.max(p.ln());
            }
        }
        if max_ln == f64::NEG_INFINITY {
            continue;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..k {
            let p = sources[i].probs()[x];
            if p > 0.0 {
                let w = (r * (p.ln() - max_ln)).exp();
                num += w * hyps[i].values()[x];
                den += w;
            }
        }
        *value = (num / den).clamp(0.0, bound);
    }
    Hypothesis::new(Arc::clone(support), values, bound)
}
