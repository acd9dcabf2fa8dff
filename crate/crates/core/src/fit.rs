//! Simplex solvers and the adversarial target construction.
//!
//! [`fit_mixture`] projects a target `P` onto the mixture family
//! `{Q_lambda = sum_i lambda_i Q_i}` in Renyi divergence of order
//! `alpha >= 1`, returning the argmin weights and `D_alpha(P || Q_lambda)`
//! in bits. For finite `alpha > 1` it minimizes the convex surrogate
//!
//! ```text
//! F(lambda) = sum_x P(x)^alpha Q_lambda(x)^(1-alpha)  ( = d_alpha^(alpha-1) )
//! ```
//!
//! by exponentiated-gradient descent with a backtracking-halving line search
//! from step 1. The first-order gap `max_i s_i / F - 1`, where
//! `s_i = sum_x (P/Q_lambda)^alpha Q_i`, certifies suboptimality: for a
//! convex objective the returned divergence is within `gap/ln 2` bits of the
//! true minimum. Order 1 minimizes the KL objective the same way. Order
//! infinity maximizes the concave `min_x Q_lambda(x)/P(x)` through an
//! annealed soft-min (temperature shrinks until the smoothing error is below
//! tolerance), since the hard objective is piecewise linear.
//!
//! [`robust_fit`] plays the repeated game behind the smoothed combiner's
//! guarantee: an adversary runs multiplicative weights over the `k` sources
//! (learning rate `sqrt(8 ln k / T)`), the lambda-player best-responds with
//! an exponentiated-gradient pass on the adversary's weighted loss, and the
//! best iterate seen (including running averages) is returned together with
//! its worst per-source loss.
//!
//! [`adversarial_target`] builds the target that shows the divergence-based
//! guarantees are near-tight: scale `Q` up by `r` on the error set of a
//! hypothesis and down elsewhere, spending exactly the allowed divergence
//! budget.

use std::sync::Arc;

use crate::divergence::{renyi_divergence, AlphaOrder};
use crate::model::{
    expected_loss, same_support, Dist, Hypothesis, LossSpec, SimplexWeights,
};
use crate::{combine, Error, Result};

pub const DEFAULT_FIT_TOL: f64 = 1e-9;
pub const DEFAULT_FIT_MAX_ITERS: usize = 100_000;
pub const DEFAULT_ROBUST_ETA: f64 = 1e-3;
pub const DEFAULT_ROBUST_DELTA: f64 = 1e-3;
pub const DEFAULT_ROBUST_MAX_ITERS: usize = 10_000;

const LN_2: f64 = std::f64::consts::LN_2;
const MAX_BACKTRACKS: usize = 60;

/// Outcome of a mixture fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub weights: SimplexWeights,
    /// `D_alpha(P || Q_lambda)` at the returned weights, in bits.
    pub objective_bits: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Outcome of the robust min-max fit.
#[derive(Debug, Clone)]
pub struct RobustFitResult {
    pub weights: SimplexWeights,
    pub eta: f64,
    /// `max_i L_{Q_i}(h_{lambda,eta}, f)` at the returned weights.
    pub worst_source_loss: f64,
    /// Achieved slack over `max_i L_{Q_i}(h_i, f)`; zero when the combined
    /// rule does at least as well as the worst base hypothesis.
    pub delta: f64,
}

/// The scaled target distribution certifying near-tightness of the bounds.
#[derive(Debug, Clone)]
pub struct AdversarialTarget {
    pub p: Dist,
    /// Scale factor applied to `Q` on the error set.
    pub r_factor: f64,
    /// Divergence budget the construction was asked to respect, in bits.
    pub delta_alpha: f64,
    /// `D_alpha(P || Q)` actually attained, in bits (never above the budget).
    pub realized_divergence_bits: f64,
    /// `L_P(h, f)` under the zero-one loss, equal to `P(error set)`.
    pub realized_loss: f64,
}

fn ensure_family(p: &Dist, sources: &[Dist]) -> Result<()> {
    if sources.is_empty() {
        return Err(Error::Empty("sources"));
    }
    for q in sources {
        if !same_support(p.support(), q.support()) {
            return Err(Error::SupportMismatch);
        }
    }
    for (x, &mass) in p.probs().iter().enumerate() {
        if mass > 0.0 && !sources.iter().any(|q| q.probs()[x] > 0.0) {
            return Err(Error::Infeasible(format!(
                "target charges point {:?} that no source covers",
                p.support().id(x)
            )));
        }
    }
    Ok(())
}

/// Renormalizes strictly positive weights into a `SimplexWeights`, absorbing
/// the final rounding residual into the largest entry.
fn to_weights(mut lam: Vec<f64>) -> SimplexWeights {
    let sum: f64 = lam.iter().sum();
    for v in &mut lam {
        *v /= sum;
    }
    let resid = 1.0 - lam.iter().sum::<f64>();
    let argmax =
        (0..lam.len()).max_by(|&a, &b| lam[a].partial_cmp(&lam[b]).unwrap()).unwrap();
    lam[argmax] += resid;
    SimplexWeights::new(lam).expect("renormalized weights lie on the simplex")
}

/// Multiplicative update `lambda_i <- lambda_i * exp(step * dir_i)` followed
/// by renormalization. `dir` is expected to be shifted so its maximum is 0;
/// exponents are floored to keep every weight strictly positive.
fn eg_step(lam: &[f64], dir: &[f64], step: f64) -> Vec<f64> {
    let mut out: Vec<f64> = lam
        .iter()
        .zip(dir)
        .map(|(&l, &d)| l * (step * d).max(-700.0).exp())
        .collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Shifts `raw` to have maximum 0 and unit max-norm, so a line-search step of
/// 1 changes any weight ratio by at most a factor of e.
fn normalized_direction(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let span = (max - min).max(1e-300);
    raw.iter().map(|&v| (v - max) / span).collect()
}

/// Fits mixture weights minimizing `D_alpha(P || Q_lambda)` for
/// `alpha >= 1`. Errors if `P` charges a point outside the union of the
/// source supports; exhausting `max_iters` is not an error (the best iterate
/// comes back with `converged = false`).
pub fn fit_mixture(
    p: &Dist,
    sources: &[Dist],
    alpha: AlphaOrder,
    tol: f64,
    max_iters: usize,
) -> Result<FitResult> {
    ensure_family(p, sources)?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    if max_iters == 0 {
        return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
    }
    match alpha {
        AlphaOrder::Zero => {
            Err(Error::InvalidAlpha("mixture fitting needs alpha >= 1, got zero".into()))
        }
        AlphaOrder::Finite(a) if a < 1.0 => Err(Error::InvalidAlpha(format!(
            "mixture fitting needs alpha >= 1, got {a}"
        ))),
        AlphaOrder::One => fit_finite(p, sources, 1.0, tol, max_iters),
        AlphaOrder::Finite(a) => fit_finite(p, sources, a, tol, max_iters),
        AlphaOrder::Infinity => fit_infinity(p, sources, tol, max_iters),
    }
}

/// Shared state for the finite-order (including KL) descent.
struct FiniteObjective<'a> {
    charged: Vec<usize>,
    ln_p: Vec<f64>,
    sources: &'a [Dist],
    alpha: f64,
}

struct FiniteEval {
    /// `ln F` for `alpha > 1`, the KL value in nats for `alpha = 1`.
    objective: f64,
    /// Gradient-shaped per-source scores on a common (shifted) scale.
    scores: Vec<f64>,
    /// First-order optimality gap, relative.
    gap: f64,
}

impl<'a> FiniteObjective<'a> {
    fn new(p: &Dist, sources: &'a [Dist], alpha: f64) -> Self {
        let charged: Vec<usize> =
            (0..p.len()).filter(|&x| p.probs()[x] > 0.0).collect();
        let ln_p = charged.iter().map(|&x| p.probs()[x].ln()).collect();
        FiniteObjective { charged, ln_p, sources, alpha }
    }

    fn eval(&self, lam: &[f64]) -> FiniteEval {
        let k = self.sources.len();
        let a = self.alpha;
        // t_x = alpha * ln(P/Q_lambda); shifted log-sum-exps keep the
        // accumulations finite for any alpha and any tiny Q_lambda.
        let mut t = Vec::with_capacity(self.charged.len());
        let mut t_max = f64::NEG_INFINITY;
        for (j, &x) in self.charged.iter().enumerate() {
            let q: f64 =
                lam.iter().zip(self.sources).map(|(&l, src)| l * src.probs()[x]).sum();
            let tv = if q > 0.0 { a * (self.ln_p[j] - q.ln()) } else { f64::INFINITY };
            t_max = t_max.max(tv);
            t.push(tv);
        }
        if t_max == f64::INFINITY {
            // A charged point lost all its mass; the line search rejects this.
            return FiniteEval { objective: f64::INFINITY, scores: vec![0.0; k], gap: f64::INFINITY };
        }
        let mut f_shift = 0.0;
        let mut scores = vec![0.0; k];
        let mut kl = 0.0;
        for (j, &x) in self.charged.iter().enumerate() {
            let w = (t[j] - t_max).exp();
            let q: f64 =
                lam.iter().zip(self.sources).map(|(&l, src)| l * src.probs()[x]).sum();
            f_shift += w * q;
            for (i, src) in self.sources.iter().enumerate() {
                scores[i] += w * src.probs()[x];
            }
            if a == 1.0 {
                let pv = self.ln_p[j].exp();
                kl += pv * (self.ln_p[j] - q.ln());
            }
        }
        let max_score = scores.iter().copied().fold(0.0, f64::max);
        if a == 1.0 {
            // lambda . scores == f_shift corresponds to sum_x P = 1.
            let gap = max_score / f_shift - 1.0;
            FiniteEval { objective: kl, scores, gap }
        } else {
            let objective = t_max + f_shift.ln();
            let gap = max_score / f_shift - 1.0;
            FiniteEval { objective, scores, gap }
        }
    }

    fn bits(&self, objective: f64) -> f64 {
        if self.alpha == 1.0 {
            (objective / LN_2).max(0.0)
        } else {
            (objective / ((self.alpha - 1.0) * LN_2)).max(0.0)
        }
    }
}

fn fit_finite(
    p: &Dist,
    sources: &[Dist],
    alpha: f64,
    tol: f64,
    max_iters: usize,
) -> Result<FitResult> {
    let k = sources.len();
    let obj = FiniteObjective::new(p, sources, alpha);
    let mut lam = vec![1.0 / k as f64; k];
    let mut eval = obj.eval(&lam);
    let mut iterations = 0;
    let mut converged = eval.gap <= tol;
    while !converged && iterations < max_iters {
        iterations += 1;
        let dir = normalized_direction(&eval.scores);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let cand = eg_step(&lam, &dir, step);
            let cand_eval = obj.eval(&cand);
            if cand_eval.objective < eval.objective {
                lam = cand;
                eval = cand_eval;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        converged = eval.gap <= tol;
        if !accepted {
            break;
        }
    }
    Ok(FitResult {
        weights: to_weights(lam),
        objective_bits: obj.bits(eval.objective),
        iterations,
        converged,
    })
}

/// Order-infinity fit: maximize `v(lambda) = min_x Q_lambda(x)/P(x)`
/// (so that `D_inf = -log2 v`) through a temperature-annealed soft-min.
fn fit_infinity(p: &Dist, sources: &[Dist], tol: f64, max_iters: usize) -> Result<FitResult> {
    let k = sources.len();
    let charged: Vec<usize> = (0..p.len()).filter(|&x| p.probs()[x] > 0.0).collect();
    // ratios[x][i] = Q_i(x)/P(x); v(lambda) = min_x <lambda, ratios[x]>.
    let ratios: Vec<Vec<f64>> = charged
        .iter()
        .map(|&x| sources.iter().map(|q| q.probs()[x] / p.probs()[x]).collect())
        .collect();
    let n = ratios.len();

    let hard_min = |lam: &[f64]| -> f64 {
        ratios
            .iter()
            .map(|row| row.iter().zip(lam).map(|(r, l)| r * l).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    };
    // Soft-min value and its gradient: phi_tau = -tau ln sum_x exp(-v_x/tau),
    // grad_i = sum_x w_x ratios[x][i] with w the soft-min weights.
    let soft = |lam: &[f64], tau: f64| -> (f64, Vec<f64>, f64) {
        let vals: Vec<f64> = ratios
            .iter()
            .map(|row| row.iter().zip(lam).map(|(r, l)| r * l).sum::<f64>())
            .collect();
        let m = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let mut z = 0.0;
        let mut grad = vec![0.0; k];
        let mut mean = 0.0;
        for (row, &v) in ratios.iter().zip(&vals) {
            let w = (-(v - m) / tau).exp();
            z += w;
            mean += w * v;
            for (g, r) in grad.iter_mut().zip(row) {
                *g += w * r;
            }
        }
        for g in &mut grad {
            *g /= z;
        }
        mean /= z;
        let phi = m - tau * (z.ln() - 0.0);
        let _ = mean;
        (phi, grad, m)
    };

    let mut lam = vec![1.0 / k as f64; k];
    let mut iterations = 0;
    let v0 = hard_min(&lam);
    let ln_n = (n.max(2) as f64).ln();
    let mut tau = (v0.abs().max(1e-6)).max(1e-6);
    let mut converged = false;
    loop {
        // Final temperature keeps smoothing error + stage gap below
        // tol * v in natural-log scale, i.e. about tol bits after log2.
        let v_now = hard_min(&lam);
        let tau_final = (tol * v_now.max(1e-300) * LN_2 / (4.0 * ln_n)).max(1e-300);
        let last_stage = tau <= tau_final;
        let gap_target = if last_stage { tol * v_now * LN_2 / 4.0 } else { tau * 0.25 };
        let mut stage_done = false;
        while iterations < max_iters {
            let (phi, grad, _) = soft(&lam, tau);
            let lam_dot: f64 = grad.iter().zip(&lam).map(|(g, l)| g * l).sum();
            let max_g = grad.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max_g - lam_dot <= gap_target {
                stage_done = true;
                break;
            }
            iterations += 1;
            let dir = normalized_direction(&grad);
            // Ascent: exponentiate the (shifted, non-positive) direction
            // with positive sign so the largest-gradient coordinate grows.
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..MAX_BACKTRACKS {
                let cand: Vec<f64> = {
                    let raised: Vec<f64> = dir.iter().map(|&d| d + 1.0).collect();
                    let mut c: Vec<f64> = lam
                        .iter()
                        .zip(&raised)
                        .map(|(&l, &d)| l * ((step * (d - 1.0)).max(-700.0)).exp())
                        .collect();
                    let s: f64 = c.iter().sum();
                    for v in &mut c {
                        *v /= s;
                    }
                    c
                };
                let (phi_c, _, _) = soft(&cand, tau);
                if phi_c > phi {
                    lam = cand;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                stage_done = true;
                break;
            }
        }
        if last_stage {
            converged = stage_done;
            break;
        }
        if iterations >= max_iters {
            break;
        }
        tau *= 0.25;
    }
    let v = hard_min(&lam);
    Ok(FitResult {
        weights: to_weights(lam),
        objective_bits: (-v.log2()).max(0.0),
        iterations,
        converged,
    })
}

/// Worst per-source loss of the smoothed rule at `lam`.
fn worst_loss(
    sources: &[Dist],
    hyps: &[Hypothesis],
    f: &Hypothesis,
    loss: &LossSpec,
    lam: &SimplexWeights,
    eta: f64,
) -> Result<f64> {
    let h = combine::combine_smoothed(sources, hyps, lam, eta)?;
    let mut worst = 0.0f64;
    for q in sources {
        worst = worst.max(expected_loss(q, &h, f, loss)?);
    }
    Ok(worst)
}

/// Adversary-weighted loss of the smoothed rule and its gradient in lambda.
fn weighted_loss_grad(
    sources: &[Dist],
    hyps: &[Hypothesis],
    f: &Hypothesis,
    loss: &LossSpec,
    adversary: &[f64],
    lam: &[f64],
    eta: f64,
) -> (f64, Vec<f64>) {
    let k = sources.len();
    let n = f.support().len();
    let u = 1.0 / n as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; k];
    for x in 0..n {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..k {
            let m = lam[i] * sources[i].probs()[x] + eta / k as f64 * u;
            num += m * hyps[i].values()[x];
            den += m;
        }
        // a = adversary-weighted source mass at x.
        let a: f64 =
            adversary.iter().zip(sources).map(|(&w, q)| w * q.probs()[x]).sum();
        if den <= 0.0 {
            continue;
        }
        let h = num / den;
        let fv = f.values()[x];
        let l = loss.eval(h, fv).expect("convex losses evaluate everywhere");
        value += a * l;
        if a > 0.0 {
            let dl = loss.grad_first(h, fv).expect("convex losses differentiate");
            for i in 0..k {
                grad[i] += a * dl * sources[i].probs()[x] * (hyps[i].values()[x] - h) / den;
            }
        }
    }
    (value, grad)
}

/// All per-source losses of the smoothed rule at `lam`, in one fused pass
/// (no intermediate hypothesis is materialized — this runs in the hot loop).
fn per_source_losses(
    sources: &[Dist],
    hyps: &[Hypothesis],
    f: &Hypothesis,
    loss: &LossSpec,
    lam: &[f64],
    eta: f64,
) -> Vec<f64> {
    let k = sources.len();
    let n = f.support().len();
    let u = 1.0 / n as f64;
    let mut out = vec![0.0; k];
    for x in 0..n {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..k {
            let m = lam[i] * sources[i].probs()[x] + eta / k as f64 * u;
            num += m * hyps[i].values()[x];
            den += m;
        }
        if den <= 0.0 {
            continue;
        }
        let l = loss.eval(num / den, f.values()[x]).expect("convex losses evaluate everywhere");
        for (o, q) in out.iter_mut().zip(sources) {
            *o += q.probs()[x] * l;
        }
    }
    out
}

/// One exponentiated-gradient pass on the adversary's weighted loss: a
/// single gradient with a backtracking multiplicative step, keeping the
/// iterate unchanged when no tried step improves.
fn eg_pass(
    sources: &[Dist],
    hyps: &[Hypothesis],
    f: &Hypothesis,
    loss: &LossSpec,
    adversary: &[f64],
    lam: &[f64],
    eta: f64,
) -> Vec<f64> {
    const PASS_BACKTRACKS: usize = 12;
    let (value, grad) = weighted_loss_grad(sources, hyps, f, loss, adversary, lam, eta);
    // Descent: weights with large positive gradient shrink.
    let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
    let dir = normalized_direction(&neg);
    let mut step = 1.0;
    for _ in 0..PASS_BACKTRACKS {
        let cand = eg_step(lam, &dir, step);
        let (v, _) = weighted_loss_grad(sources, hyps, f, loss, adversary, &cand, eta);
        if v < value {
            return cand;
        }
        step *= 0.5;
    }
    lam.to_vec()
}

/// Subgradient descent directly on the hard objective
/// `g(lambda) = max_i L_{Q_i}(h_{lambda,eta}, f)`: at each step descend the
/// gradient of the currently-worst source's loss, accepting only moves that
/// lower `g` itself.
fn polish_worst(
    sources: &[Dist],
    hyps: &[Hypothesis],
    f: &Hypothesis,
    loss: &LossSpec,
    start: &[f64],
    eta: f64,
    iters: usize,
) -> Result<(Vec<f64>, f64)> {
    let k = sources.len();
    let eval = |lam: &[f64]| -> (f64, usize) {
        let per = per_source_losses(sources, hyps, f, loss, lam, eta);
        let mut worst = f64::NEG_INFINITY;
        let mut arg = 0;
        for (i, &l) in per.iter().enumerate() {
            if l > worst {
                worst = l;
                arg = i;
            }
        }
        (worst, arg)
    };
    let mut lam = start.to_vec();
    let (mut value, mut active) = eval(&lam);
    for _ in 0..iters {
        let mut focus = vec![0.0; k];
        focus[active] = 1.0;
        let (_, grad) = weighted_loss_grad(sources, hyps, f, loss, &focus, &lam, eta);
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        let dir = normalized_direction(&neg);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let cand = eg_step(&lam, &dir, step);
            let (v, a) = eval(&cand);
            if v < value {
                lam = cand;
                value = v;
                active = a;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok((lam, value))
}

/// Min-max fit of the smoothed combiner: finds weights whose worst
/// per-source loss is within `delta` of the best achievable, stopping early
/// once a duality gap certifies it. Returns the best iterate seen; if the
/// certificate is not reached within `max_iters` rounds the result simply
/// carries the achieved `worst_source_loss` for the caller to judge.
pub fn robust_fit(
    sources: &[Dist],
    hyps: &[Hypothesis],
    f: &Hypothesis,
    loss: &LossSpec,
    eta: f64,
    delta: f64,
    max_iters: usize,
) -> Result<RobustFitResult> {
    if sources.is_empty() {
        return Err(Error::Empty("sources"));
    }
    if hyps.len() != sources.len() {
        return Err(Error::LengthMismatch { expected: sources.len(), got: hyps.len() });
    }
    for q in sources {
        if !same_support(f.support(), q.support()) {
            return Err(Error::SupportMismatch);
        }
    }
    for h in hyps {
        if !same_support(f.support(), h.support()) {
            return Err(Error::SupportMismatch);
        }
    }
    if !loss.is_convex() {
        return Err(Error::InvalidParameter(
            "robust fitting requires a loss convex in the prediction".into(),
        ));
    }
    if !(eta.is_finite() && (0.0..1.0).contains(&eta)) {
        return Err(Error::InvalidParameter(format!("eta must lie in [0, 1), got {eta}")));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    if max_iters == 0 {
        return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
    }

    let k = sources.len();
    let m = loss.bound_m();
    let eps = {
        let mut worst = 0.0f64;
        for (q, h) in sources.iter().zip(hyps) {
            worst = worst.max(expected_loss(q, h, f, loss)?);
        }
        worst
    };

    if k == 1 {
        let weights = SimplexWeights::new(vec![1.0])?;
        let worst = worst_loss(sources, hyps, f, loss, &weights, eta)?;
        return Ok(RobustFitResult { weights, eta, worst_source_loss: worst, delta: (worst - eps).max(0.0) });
    }

    let hard = |lam: &[f64]| -> f64 {
        per_source_losses(sources, hyps, f, loss, lam, eta).into_iter().fold(0.0f64, f64::max)
    };

    // Repeated game: the adversary reweights the sources by multiplicative
    // weights on their per-source losses; the lambda-player answers each
    // round with one exponentiated-gradient pass on the reweighted loss.
    let uniform = vec![1.0 / k as f64; k];
    let t_rounds = max_iters;
    let rate = (8.0 * (k as f64).ln() / t_rounds as f64).sqrt();
    let mut adversary = uniform.clone();
    let mut lam = uniform.clone();
    let mut lam_sum = vec![0.0; k];
    let mut rounds = 0usize;
    let mut best_raw = uniform.clone();
    let mut best_g = hard(&uniform);
    let mut best_round = 0usize;

    for round in 1..=t_rounds {
        rounds = round;
        lam = eg_pass(sources, hyps, f, loss, &adversary, &lam, eta);
        let per = per_source_losses(sources, hyps, f, loss, &lam, eta);
        let g = per.iter().fold(0.0f64, |a, &b| a.max(b));
        if g < best_g {
            best_g = g;
            best_raw = lam.clone();
            best_round = round;
        }
        for (s, &l) in lam_sum.iter_mut().zip(&lam) {
            *s += l;
        }
        // The running average is the classical no-regret output; it moves
        // slowly, so sampling it occasionally is enough.
        if round % 16 == 0 {
            let avg: Vec<f64> = lam_sum.iter().map(|s| s / round as f64).collect();
            let g_avg = hard(&avg);
            if g_avg < best_g {
                best_g = g_avg;
                best_raw = avg;
                best_round = round;
            }
        }
        // The polish stage below does the fine minimization; the game only
        // has to land in the right basin, so stop once it stalls.
        if best_g <= 1e-15 || (round >= 1_500 && round - best_round >= 1_000) {
            break;
        }
        // Adversary ascent on per-source losses scaled to [0, 1].
        let mut z = 0.0;
        for (w, l) in adversary.iter_mut().zip(&per) {
            *w *= (rate * l / m).exp();
            z += *w;
        }
        for w in &mut adversary {
            *w /= z;
        }
    }

    // Finish with subgradient descents on the hard objective from a spread
    // of seeds, so one local basin cannot capture the answer: the game's
    // best iterate and average, the uniform point, and (for small k) the
    // best cells of a coarse simplex scan.
    let mut seeds: Vec<Vec<f64>> = vec![best_raw, uniform];
    seeds.push(lam_sum.iter().map(|s| s / rounds as f64).collect());
    if k <= 3 {
        let mut scored: Vec<(f64, Vec<f64>)> = simplex_grid(k, 24)
            .into_iter()
            .map(|mut w| {
                // Keep strictly positive so multiplicative steps can move.
                for v in &mut w {
                    *v = v.max(1e-9);
                }
                let s: f64 = w.iter().sum();
                for v in &mut w {
                    *v /= s;
                }
                (hard(&w), w)
            })
            .collect();
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        seeds.extend(scored.into_iter().take(3).map(|(_, w)| w));
    } else {
        for i in 0..k {
            let mut v = vec![1e-6; k];
            v[i] = 1.0;
            let s: f64 = v.iter().sum();
            seeds.push(v.iter().map(|x| x / s).collect());
        }
    }

    // Judge every candidate through the same code path external callers
    // use to measure the returned weights, so the reported worst loss is
    // exactly reproducible.
    let mut best_lam: Option<SimplexWeights> = None;
    let mut best_worst = f64::INFINITY;
    for seed in seeds {
        let (polished, _) = polish_worst(sources, hyps, f, loss, &seed, eta, 160)?;
        let w = to_weights(polished);
        let value = worst_loss(sources, hyps, f, loss, &w, eta)?;
        if value < best_worst {
            best_worst = value;
            best_lam = Some(w);
        }
    }
    let weights = best_lam.expect("at least one polish seed");
    Ok(RobustFitResult {
        weights,
        eta,
        worst_source_loss: best_worst,
        delta: (best_worst - eps).max(0.0),
    })
}

/// Builds the adversarial target for a hypothesis `h` with zero-one error
/// set `Err = {x : h(x) != f(x)}` against `Q`: `P = r Q` on `Err` and
/// `P = (1 - r eps)/(1 - eps) Q` elsewhere, where `eps = Q(Err)` and
///
/// ```text
/// r = [ (2^{(alpha-1) delta_alpha} - 1) / eps ]^{1/alpha}
/// ```
///
/// spends the divergence budget: `D_alpha(P || Q) <= delta_alpha` with
/// `L_P(h, f) = r eps = [2^{(alpha-1) delta_alpha} - 1]^{1/alpha} eps^{(alpha-1)/alpha}`.
///
/// Requires finite `alpha > 1`, `eps` strictly inside `(0, 1)`, a budget of
/// at least `log2(1 + eps)/(alpha - 1)` (so `r >= 1`), and `r eps <= 1` (so
/// the scaled mass is feasible).
pub fn adversarial_target(
    q: &Dist,
    h: &Hypothesis,
    f: &Hypothesis,
    alpha: f64,
    delta_alpha: f64,
) -> Result<AdversarialTarget> {
    if !(alpha.is_finite() && alpha > 1.0) {
        return Err(Error::InvalidAlpha(format!(
            "the construction needs finite alpha > 1, got {alpha}"
        )));
    }
    if !(delta_alpha.is_finite() && delta_alpha > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "delta_alpha must be positive, got {delta_alpha}"
        )));
    }
    if !same_support(q.support(), h.support()) || !same_support(q.support(), f.support()) {
        return Err(Error::SupportMismatch);
    }
    if !h.is_boolean() || !f.is_boolean() {
        return Err(Error::InvalidParameter(
            "the construction needs Boolean h and f (zero-one error set)".into(),
        ));
    }
    let err_set: Vec<bool> =
        h.values().iter().zip(f.values()).map(|(a, b)| a != b).collect();
    let eps: f64 = q
        .probs()
        .iter()
        .zip(&err_set)
        .filter(|(_, &e)| e)
        .map(|(&m, _)| m)
        .sum();
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "Q(error set) = {eps} must lie strictly inside (0, 1)"
        )));
    }
    let t = ((alpha - 1.0) * delta_alpha).exp2();
    let r = ((t - 1.0) / eps).powf(1.0 / alpha);
    if r < 1.0 - 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "delta_alpha = {delta_alpha} is below the threshold log2(1+eps)/(alpha-1) = {}",
            (1.0 + eps).log2() / (alpha - 1.0)
        )));
    }
    let scaled_err_mass = r * eps;
    if scaled_err_mass > 1.0 + 1e-12 {
        return Err(Error::Infeasible(format!(
            "r * eps = {scaled_err_mass} exceeds 1; the scaled error mass does not fit"
        )));
    }
    let off_factor = ((1.0 - scaled_err_mass) / (1.0 - eps)).max(0.0);
    let probs: Vec<f64> = q
        .probs()
        .iter()
        .zip(&err_set)
        .map(|(&m, &e)| if e { r * m } else { off_factor * m })
        .collect();
    let p = Dist::new(Arc::clone(q.support()), probs)?;
    let realized_divergence_bits =
        renyi_divergence(&p, q, AlphaOrder::finite(alpha)?)?.bits();
    let realized_loss = p.mass_where(|x| err_set[x]);
    Ok(AdversarialTarget { p, r_factor: r, delta_alpha, realized_divergence_bits, realized_loss })
}

/// Enumerates the simplex grid with `steps` subdivisions per axis for
/// `k <= 3`, as used by oracle comparisons in tests.
pub fn simplex_grid(k: usize, steps: usize) -> Vec<Vec<f64>> {
    assert!((1..=3).contains(&k), "grid oracle covers k <= 3");
    assert!(steps >= 1);
    let mut out = Vec::new();
    match k {
        1 => out.push(vec![1.0]),
        2 => {
            for i in 0..=steps {
                let a = i as f64 / steps as f64;
                out.push(vec![a, 1.0 - a]);
            }
        }
        _ => {
            for i in 0..=steps {
                for j in 0..=steps - i {
                    let a = i as f64 / steps as f64;
                    let b = j as f64 / steps as f64;
                    out.push(vec![a, b, (1.0 - a - b).max(0.0)]);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::d_alpha;
    use crate::model::{mixture, Support};
    use crate::rng::CounterRng;
    use std::sync::Arc;

    fn support(n: usize) -> Arc<Support> {
        Support::new((0..n).map(|i| format!("x{i}")).collect()).unwrap()
    }

    fn dist(s: &Arc<Support>, probs: &[f64]) -> Dist {
        Dist::new(Arc::clone(s), probs.to_vec()).unwrap()
    }

    fn hyp(s: &Arc<Support>, values: &[f64]) -> Hypothesis {
        Hypothesis::new(Arc::clone(s), values.to_vec(), 1.0).unwrap()
    }

    fn random_dist(rng: &mut CounterRng, s: &Arc<Support>, floor: f64) -> Dist {
        let n = s.len();
        let mut v: Vec<f64> = (0..n).map(|_| rng.uniform() + floor).collect();
        let sum: f64 = v.iter().sum();
        for x in &mut v {
            *x /= sum;
        }
        dist(s, &v)
    }

    const FIT_ORDERS: [AlphaOrder; 4] = [
        AlphaOrder::One,
        AlphaOrder::Finite(1.5),
        AlphaOrder::Finite(2.0),
        AlphaOrder::Infinity,
    ];

    #[test]
    fn fit_recovers_a_vertex_when_target_is_a_source() {
        let mut rng = CounterRng::new(31, 0);
        let s = support(8);
        let q1 = random_dist(&mut rng, &s, 0.05);
        let q2 = random_dist(&mut rng, &s, 0.05);
        for alpha in FIT_ORDERS {
            let fit = fit_mixture(&q1, &[q1.clone(), q2.clone()], alpha, 1e-10, 50_000).unwrap();
            assert!(fit.converged, "not converged at {alpha}");
            assert!(fit.objective_bits <= 1e-9, "objective {} at {alpha}", fit.objective_bits);
            assert!(
                fit.weights.as_slice()[0] >= 1.0 - 1e-4,
                "weights {:?} at {alpha}",
                fit.weights.as_slice()
            );
        }
    }

    #[test]
    fn fit_finds_the_symmetric_midpoint() {
        let s = support(2);
        let q1 = dist(&s, &[0.9, 0.1]);
        let q2 = dist(&s, &[0.1, 0.9]);
        let p = dist(&s, &[0.5, 0.5]);
        for alpha in FIT_ORDERS {
            let fit = fit_mixture(&p, &[q1.clone(), q2.clone()], alpha, 1e-10, 50_000).unwrap();
            assert!(fit.converged);
            assert!(fit.objective_bits <= 1e-9, "objective {}", fit.objective_bits);
            assert!(
                (fit.weights.as_slice()[0] - 0.5).abs() <= 1e-6,
                "weights {:?} at {alpha}",
                fit.weights.as_slice()
            );
        }
    }

    #[test]
    fn fit_recovers_mixing_weights_on_disjoint_sources() {
        let s = support(4);
        let q1 = dist(&s, &[0.5, 0.5, 0.0, 0.0]);
        let q2 = dist(&s, &[0.0, 0.0, 0.25, 0.75]);
        let p = mixture(
            &[q1.clone(), q2.clone()],
            &SimplexWeights::new(vec![0.3, 0.7]).unwrap(),
        )
        .unwrap();
        for alpha in FIT_ORDERS {
            let fit = fit_mixture(&p, &[q1.clone(), q2.clone()], alpha, 1e-10, 50_000).unwrap();
            assert!(
                (fit.weights.as_slice()[0] - 0.3).abs() <= 1e-6,
                "weights {:?} at {alpha}",
                fit.weights.as_slice()
            );
            assert!(fit.objective_bits <= 1e-9);
        }
    }

    #[test]
    fn fit_matches_a_dense_grid_oracle() {
        let mut rng = CounterRng::new(32, 0);
        for trial in 0..60 {
            let n = 2 + (rng.next_u64() % 10) as usize;
            let k = 2 + (rng.next_u64() % 2) as usize;
            let s = support(n);
            let sources: Vec<Dist> = (0..k).map(|_| random_dist(&mut rng, &s, 0.02)).collect();
            let p = random_dist(&mut rng, &s, 0.02);
            let alpha = [AlphaOrder::Finite(1.5), AlphaOrder::Finite(2.0), AlphaOrder::Finite(3.0)]
                [trial % 3];
            let fit = fit_mixture(&p, &sources, alpha, 1e-9, 100_000).unwrap();
            let grid_best = simplex_grid(k, 50)
                .into_iter()
                .filter_map(|w| {
                    let w = SimplexWeights::new(w).ok()?;
                    let q = mixture(&sources, &w).ok()?;
                    Some(d_alpha(&p, &q, alpha).ok()?.log2())
                })
                .fold(f64::INFINITY, f64::min);
            assert!(
                fit.objective_bits <= grid_best + 1e-8,
                "trial {trial}: solver {} vs grid {grid_best}",
                fit.objective_bits
            );
        }
    }

    #[test]
    fn fit_is_invariant_under_source_permutation() {
        let mut rng = CounterRng::new(33, 0);
        let s = support(6);
        let sources: Vec<Dist> = (0..3).map(|_| random_dist(&mut rng, &s, 0.05)).collect();
        let p = random_dist(&mut rng, &s, 0.05);
        let a = fit_mixture(&p, &sources, AlphaOrder::Finite(2.0), 1e-10, 100_000).unwrap();
        let permuted = vec![sources[2].clone(), sources[0].clone(), sources[1].clone()];
        let b = fit_mixture(&p, &permuted, AlphaOrder::Finite(2.0), 1e-10, 100_000).unwrap();
        assert!((a.objective_bits - b.objective_bits).abs() <= 1e-9);
        let wa = a.weights.as_slice();
        let wb = b.weights.as_slice();
        for (ai, bi) in [(2usize, 0usize), (0, 1), (1, 2)] {
            assert!((wa[ai] - wb[bi]).abs() <= 1e-6, "{wa:?} vs {wb:?}");
        }
    }

    #[test]
    fn fit_rejects_uncovered_targets_and_bad_orders() {
        let s = support(2);
        let p = dist(&s, &[0.5, 0.5]);
        let q = dist(&s, &[1.0, 0.0]);
        for alpha in FIT_ORDERS {
            assert!(matches!(
                fit_mixture(&p, &[q.clone()], alpha, 1e-9, 1000),
                Err(Error::Infeasible(_))
            ));
        }
        assert!(matches!(
            fit_mixture(&p, &[p.clone()], AlphaOrder::Zero, 1e-9, 1000),
            Err(Error::InvalidAlpha(_))
        ));
        assert!(matches!(
            fit_mixture(&p, &[p.clone()], AlphaOrder::Finite(0.5), 1e-9, 1000),
            Err(Error::InvalidAlpha(_))
        ));
    }

    #[test]
    fn single_source_fit_returns_the_divergence() {
        let mut rng = CounterRng::new(34, 0);
        let s = support(5);
        let p = random_dist(&mut rng, &s, 0.05);
        let q = random_dist(&mut rng, &s, 0.05);
        for alpha in FIT_ORDERS {
            let fit = fit_mixture(&p, &[q.clone()], alpha, 1e-9, 1000).unwrap();
            assert!(fit.converged);
            assert_eq!(fit.weights.as_slice(), &[1.0]);
            let direct = d_alpha(&p, &q, alpha).unwrap().log2();
            assert!((fit.objective_bits - direct).abs() <= 1e-9);
        }
    }

    #[test]
    fn infinite_order_fit_agrees_with_a_huge_finite_order() {
        let mut rng = CounterRng::new(35, 0);
        for _ in 0..10 {
            let n = 3 + (rng.next_u64() % 6) as usize;
            let s = support(n);
            let sources: Vec<Dist> = (0..2).map(|_| random_dist(&mut rng, &s, 0.1)).collect();
            let p = random_dist(&mut rng, &s, 0.1);
            let at_inf =
                fit_mixture(&p, &sources, AlphaOrder::Infinity, 1e-9, 100_000).unwrap();
            let at_large =
                fit_mixture(&p, &sources, AlphaOrder::Finite(1e4), 1e-9, 100_000).unwrap();
            assert!(
                (at_inf.objective_bits - at_large.objective_bits).abs()
                    <= 1e-3 * at_inf.objective_bits.max(1.0),
                "{} vs {}",
                at_inf.objective_bits,
                at_large.objective_bits
            );
        }
    }

    #[test]
    fn robust_fit_with_one_source_scores_that_source() {
        let mut rng = CounterRng::new(36, 0);
        let s = support(6);
        let q = random_dist(&mut rng, &s, 0.05);
        let h = hyp(&s, &(0..6).map(|_| rng.uniform()).collect::<Vec<_>>());
        let f = hyp(&s, &(0..6).map(|_| f64::from(rng.uniform() < 0.5)).collect::<Vec<_>>());
        let loss = LossSpec::absolute(1.0).unwrap();
        let fit = robust_fit(&[q.clone()], &[h.clone()], &f, &loss, 1e-3, 1e-3, 1000).unwrap();
        assert_eq!(fit.weights.as_slice(), &[1.0]);
        let expect = worst_loss(&[q], &[h], &f, &loss, &fit.weights, 1e-3).unwrap();
        assert!((fit.worst_source_loss - expect).abs() <= 1e-12);
    }

    #[test]
    fn robust_fit_on_identical_sources_has_zero_slack() {
        let mut rng = CounterRng::new(37, 0);
        let s = support(5);
        let q = random_dist(&mut rng, &s, 0.05);
        let h = hyp(&s, &(0..5).map(|_| rng.uniform()).collect::<Vec<_>>());
        let f = hyp(&s, &(0..5).map(|_| f64::from(rng.uniform() < 0.5)).collect::<Vec<_>>());
        let loss = LossSpec::absolute(1.0).unwrap();
        let fit =
            robust_fit(&[q.clone(), q.clone()], &[h.clone(), h.clone()], &f, &loss, 1e-3, 1e-3, 2000)
                .unwrap();
        assert!(fit.delta <= 1e-9, "slack {}", fit.delta);
    }

    #[test]
    fn robust_fit_matches_a_grid_oracle_on_two_sources() {
        let mut rng = CounterRng::new(38, 0);
        let loss = LossSpec::absolute(1.0).unwrap();
        let eta = 1e-3;
        for trial in 0..20 {
            let n = 2 + (rng.next_u64() % 12) as usize;
            let s = support(n);
            let sources: Vec<Dist> = (0..2).map(|_| random_dist(&mut rng, &s, 0.01)).collect();
            let f =
                hyp(&s, &(0..n).map(|_| f64::from(rng.uniform() < 0.5)).collect::<Vec<_>>());
            let hyps: Vec<Hypothesis> = (0..2)
                .map(|_| hyp(&s, &(0..n).map(|_| rng.uniform()).collect::<Vec<_>>()))
                .collect();
            let fit = robust_fit(&sources, &hyps, &f, &loss, eta, 1e-3, 10_000).unwrap();
            let oracle = simplex_grid(2, 100)
                .into_iter()
                .map(|w| {
                    let w = SimplexWeights::new(w).unwrap();
                    worst_loss(&sources, &hyps, &f, &loss, &w, eta).unwrap()
                })
                .fold(f64::INFINITY, f64::min);
            assert!(
                fit.worst_source_loss <= oracle + 1e-3,
                "trial {trial}: {} vs oracle {oracle}",
                fit.worst_source_loss
            );
        }
    }

    #[test]
    fn robust_guarantee_extends_to_every_mixture() {
        let mut rng = CounterRng::new(39, 0);
        let loss = LossSpec::squared(1.0).unwrap();
        let s = support(9);
        let sources: Vec<Dist> = (0..3).map(|_| random_dist(&mut rng, &s, 0.02)).collect();
        let f = hyp(&s, &(0..9).map(|_| f64::from(rng.uniform() < 0.5)).collect::<Vec<_>>());
        let hyps: Vec<Hypothesis> = (0..3)
            .map(|_| hyp(&s, &(0..9).map(|_| rng.uniform()).collect::<Vec<_>>()))
            .collect();
        let fit = robust_fit(&sources, &hyps, &f, &loss, 1e-3, 1e-3, 3000).unwrap();
        let h = combine::combine_smoothed(&sources, &hyps, &fit.weights, fit.eta).unwrap();
        for _ in 0..200 {
            let mu = SimplexWeights::normalized(
                &(0..3).map(|_| rng.uniform() + 1e-6).collect::<Vec<_>>(),
            )
            .unwrap();
            let p = mixture(&sources, &mu).unwrap();
            let l = expected_loss(&p, &h, &f, &loss).unwrap();
            assert!(l <= fit.worst_source_loss + 1e-12);
        }
    }

    #[test]
    fn robust_fit_rejects_nonconvex_loss_and_bad_params() {
        let s = support(2);
        let q = dist(&s, &[0.5, 0.5]);
        let h = hyp(&s, &[1.0, 0.0]);
        let f = hyp(&s, &[1.0, 1.0]);
        assert!(robust_fit(&[q.clone()], &[h.clone()], &f, &LossSpec::zero_one(), 1e-3, 1e-3, 100)
            .is_err());
        let loss = LossSpec::absolute(1.0).unwrap();
        assert!(robust_fit(&[q.clone()], &[h.clone()], &f, &loss, 1.0, 1e-3, 100).is_err());
        assert!(robust_fit(&[q.clone()], &[h.clone()], &f, &loss, 1e-3, 0.0, 100).is_err());
        assert!(robust_fit(&[q], &[h], &f, &loss, 1e-3, 1e-3, 0).is_err());
    }

    #[test]
    fn adversarial_target_hand_values() {
        // Q uniform over 10 points, h wrong on exactly one: eps = 0.1.
        let s = support(10);
        let q = dist(&s, &[0.1; 10]);
        let mut hv = vec![0.0; 10];
        hv[0] = 1.0;
        let h = hyp(&s, &hv);
        let f = hyp(&s, &vec![0.0; 10]);
        let adv = adversarial_target(&q, &h, &f, 2.0, 1.0).unwrap();
        assert!((adv.r_factor - 10.0f64.sqrt()).abs() <= 1e-12);
        assert!((adv.realized_loss - 0.1f64.sqrt()).abs() <= 1e-12);
        assert!(adv.realized_divergence_bits <= 1.0 + 1e-9);
        let total: f64 = adv.p.probs().iter().sum();
        assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn adversarial_target_at_the_budget_threshold_returns_q() {
        let s = support(4);
        let q = dist(&s, &[0.4, 0.3, 0.2, 0.1]);
        let h = hyp(&s, &[1.0, 0.0, 0.0, 0.0]);
        let f = hyp(&s, &[0.0, 0.0, 0.0, 0.0]);
        let eps = 0.4f64;
        let alpha = 2.0;
        let budget = (1.0 + eps).log2() / (alpha - 1.0);
        let adv = adversarial_target(&q, &h, &f, alpha, budget).unwrap();
        assert!((adv.r_factor - 1.0).abs() <= 1e-12);
        assert!((adv.realized_loss - eps).abs() <= 1e-12);
        assert!(adv.realized_divergence_bits <= 1e-12);
    }

    #[test]
    fn adversarial_target_rejects_degenerate_inputs() {
        let s = support(2);
        let q = dist(&s, &[0.5, 0.5]);
        let zero = hyp(&s, &[0.0, 0.0]);
        let one = hyp(&s, &[1.0, 1.0]);
        // eps = 0 and eps = 1 are both out.
        assert!(adversarial_target(&q, &zero, &zero, 2.0, 1.0).is_err());
        assert!(adversarial_target(&q, &one, &zero, 2.0, 1.0).is_err());
        // Budget below the threshold.
        let h = hyp(&s, &[1.0, 0.0]);
        assert!(adversarial_target(&q, &h, &zero, 2.0, 0.1).is_err());
        // Budget so large the scaled mass exceeds 1.
        assert!(matches!(
            adversarial_target(&q, &h, &zero, 2.0, 10.0),
            Err(Error::Infeasible(_))
        ));
        // Non-Boolean tables and alpha at the ends.
        let soft = hyp(&s, &[0.5, 0.0]);
        assert!(adversarial_target(&q, &soft, &zero, 2.0, 1.0).is_err());
        assert!(adversarial_target(&q, &h, &zero, 1.0, 1.0).is_err());
        assert!(adversarial_target(&q, &h, &zero, f64::INFINITY, 1.0).is_err());
    }

    /// Feasible random instances: the divergence budget is drawn strictly
    /// between the r >= 1 threshold and the r*eps <= 1 ceiling.
    fn random_adversarial_instance(
        rng: &mut CounterRng,
    ) -> (Dist, Hypothesis, Hypothesis, f64, f64) {
        loop {
            let n = 3 + (rng.next_u64() % 18) as usize;
            let s = support(n);
            let q = random_dist(rng, &s, 0.02);
            let fv: Vec<f64> = (0..n).map(|_| f64::from(rng.uniform() < 0.5)).collect();
            let hv: Vec<f64> = fv
                .iter()
                .map(|&v| if rng.uniform() < 0.3 { 1.0 - v } else { v })
                .collect();
            let f = hyp(&s, &fv);
            let h = hyp(&s, &hv);
            let eps: f64 = q
                .probs()
                .iter()
                .zip(hv.iter().zip(&fv))
                .filter(|(_, (a, b))| a != b)
                .map(|(&m, _)| m)
                .sum();
            if !(eps > 1e-3 && eps < 0.9) {
                continue;
            }
            let alpha = [1.5, 2.0, 3.0][(rng.next_u64() % 3) as usize];
            let lo = (1.0 + eps).log2() / (alpha - 1.0);
            let hi = (1.0 + eps.powf(1.0 - alpha)).log2() / (alpha - 1.0);
            let u = 0.05 + 0.9 * rng.uniform();
            let budget = lo + u * (hi - lo);
            return (q, h, f, alpha, budget);
        }
    }

    #[test]
    fn adversarial_target_spends_at_most_the_budget() {
        let mut rng = CounterRng::new(40, 0);
        for _ in 0..200 {
            let (q, h, f, alpha, budget) = random_adversarial_instance(&mut rng);
            let adv = adversarial_target(&q, &h, &f, alpha, budget).unwrap();
            assert!(adv.realized_divergence_bits <= budget + 1e-9);
            let total: f64 = adv.p.probs().iter().sum();
            assert!((total - 1.0).abs() <= 1e-9);
            // Closed form for the realized loss.
            let t = ((alpha - 1.0) * budget).exp2();
            let eps = adv.realized_loss / adv.r_factor;
            let closed = (t - 1.0).powf(1.0 / alpha) * eps.powf((alpha - 1.0) / alpha);
            assert!((adv.realized_loss - closed).abs() <= 1e-9);
        }
    }

    #[test]
    fn adversarial_loss_is_near_the_upper_bound() {
        // realized >= (d_alpha * eps)^((alpha-1)/alpha) * (1 - d_alpha^-(alpha-1))^(1/alpha)
        // with d_alpha the realized divergence: the guarantee is tight up to
        // that factor.
        let mut rng = CounterRng::new(41, 0);
        for _ in 0..100 {
            let (q, h, f, alpha, budget) = random_adversarial_instance(&mut rng);
            let adv = adversarial_target(&q, &h, &f, alpha, budget).unwrap();
            let eps = expected_loss(&q, &h, &f, &LossSpec::zero_one()).unwrap();
            let d = adv.realized_divergence_bits.exp2();
            let upper = (d * eps).powf((alpha - 1.0) / alpha);
            let tightness = (1.0 - d.powf(-(alpha - 1.0))).powf(1.0 / alpha);
            assert!(
                adv.realized_loss >= upper * tightness - 1e-9,
                "loss {} vs tight floor {}",
                adv.realized_loss,
                upper * tightness
            );
        }
    }

    #[test]
    fn simplex_grid_covers_the_simplex() {
        assert_eq!(simplex_grid(1, 10), vec![vec![1.0]]);
        let g2 = simplex_grid(2, 50);
        assert_eq!(g2.len(), 51);
        let g3 = simplex_grid(3, 50);
        assert_eq!(g3.len(), 52 * 51 / 2);
        for w in g2.iter().chain(&g3) {
            let sum: f64 = w.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
        }
    }
}
