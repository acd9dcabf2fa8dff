//! Randomized trial suites exercising each inequality end to end.
//!
//! Every suite draws valid random instances inside the relevant
//! preconditions, evaluates both sides of the inequality through the public
//! operations, and returns one [`BoundReport`] per check. The inequalities
//! are proved, so a single `holds = false` report is a code bug, making the
//! suites a high-yield regression net for the numerics.
//!
//! Trials are keyed by `(seed, trial index)` through the counter RNG, so
//! results are independent of execution order and thread count.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::bounds::{
    cor15_bound, lemma11_verify, lemma12_verify, lemma1_bound, lemma9_verify, thm10_bound,
    thm13_bound, thm14_bound, thm16_verify, thm17_verify, thm8_verify, BoundReport,
};
use crate::combine::{combine_distribution_weighted, combine_smoothed};
use crate::divergence::AlphaOrder;
use crate::fit::{
    fit_mixture, robust_fit, DEFAULT_FIT_MAX_ITERS, DEFAULT_FIT_TOL, DEFAULT_ROBUST_DELTA,
    DEFAULT_ROBUST_ETA, DEFAULT_ROBUST_MAX_ITERS,
};
use crate::model::{expected_loss, mixture, Dist, Hypothesis, LossSpec, SimplexWeights, Support};
use crate::rng::CounterRng;
use crate::{Error, Result};

/// Largest support any suite draws.
const MAX_SUPPORT: usize = 50;
/// Pipeline suites run a fit or a min-max solve per trial; smaller supports
/// keep a few hundred trials well under the runtime budget.
const MAX_PIPELINE_SUPPORT: usize = 30;
/// Divergence orders cycled when the caller does not pin one.
const ALPHA_CYCLE: [f64; 4] = [1.5, 2.0, 3.0, f64::INFINITY];

/// A named family of randomized checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    Lemma1,
    Lemma9,
    Lemma11,
    Lemma12,
    Thm8,
    Thm10,
    Thm13,
    Thm14,
    Cor15,
    Thm16,
    Thm17,
}

impl Suite {
    /// Every suite, in report order.
    pub fn all() -> [Suite; 11] {
        [
            Suite::Lemma1,
            Suite::Lemma9,
            Suite::Lemma11,
            Suite::Lemma12,
            Suite::Thm8,
            Suite::Thm10,
            Suite::Thm13,
            Suite::Thm14,
            Suite::Cor15,
            Suite::Thm16,
            Suite::Thm17,
        ]
    }

    /// Trial count used when the caller does not specify one: the direct
    /// two-sided evaluations are cheap and run 1000 trials; suites that
    /// solve an optimization per trial run fewer.
    pub fn default_trials(self) -> usize {
        match self {
            Suite::Lemma1 | Suite::Lemma9 | Suite::Lemma11 | Suite::Lemma12 | Suite::Thm8
            | Suite::Thm10 => 1000,
            Suite::Thm16 | Suite::Thm17 => 500,
            Suite::Thm13 | Suite::Thm14 | Suite::Cor15 => 200,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Suite::Lemma1 => "lemma1",
            Suite::Lemma9 => "lemma9",
            Suite::Lemma11 => "lemma11",
            Suite::Lemma12 => "lemma12",
            Suite::Thm8 => "thm8",
            Suite::Thm10 => "thm10",
            Suite::Thm13 => "thm13",
            Suite::Thm14 => "thm14",
            Suite::Cor15 => "cor15",
            Suite::Thm16 => "thm16",
            Suite::Thm17 => "thm17",
        };
        f.write_str(s)
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lemma1" => Ok(Suite::Lemma1),
            "lemma9" => Ok(Suite::Lemma9),
            "lemma11" => Ok(Suite::Lemma11),
            "lemma12" => Ok(Suite::Lemma12),
            "thm8" => Ok(Suite::Thm8),
            "thm10" => Ok(Suite::Thm10),
            "thm13" => Ok(Suite::Thm13),
            "thm14" => Ok(Suite::Thm14),
            "cor15" => Ok(Suite::Cor15),
            "thm16" => Ok(Suite::Thm16),
            "thm17" => Ok(Suite::Thm17),
            other => Err(Error::InvalidParameter(format!("unknown suite '{other}'"))),
        }
    }
}

/// Runs `trials` randomized checks of `suite`, deterministically in `seed`
/// and independent of thread count. `alpha_override` pins the divergence
/// order (or the norm order `r`, for the norm-based suites) instead of
/// cycling through the defaults.
pub fn run_suite(
    suite: Suite,
    trials: usize,
    seed: u64,
    alpha_override: Option<f64>,
) -> Result<Vec<BoundReport>> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let per_trial: Vec<Result<Vec<BoundReport>>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = CounterRng::new(seed, trial as u64);
            run_trial(suite, trial, &mut rng, alpha_override)
        })
        .collect();
    let mut reports = Vec::with_capacity(trials);
    for r in per_trial {
        reports.extend(r?);
    }
    Ok(reports)
}

/// Count of reports with `holds = false`.
pub fn count_violations(reports: &[BoundReport]) -> usize {
    reports.iter().filter(|r| !r.holds).count()
}

fn run_trial(
    suite: Suite,
    trial: usize,
    rng: &mut CounterRng,
    alpha_override: Option<f64>,
) -> Result<Vec<BoundReport>> {
    match suite {
        Suite::Lemma1 => lemma1_trial(trial, rng, alpha_override),
        Suite::Lemma9 => lemma9_trial(trial, rng, alpha_override),
        Suite::Lemma11 => lemma11_trial(trial, rng, alpha_override),
        Suite::Lemma12 => lemma12_trial(trial, rng, alpha_override),
        Suite::Thm8 => thm8_trial(trial, rng, alpha_override),
        Suite::Thm10 => thm10_trial(trial, rng, alpha_override),
        Suite::Thm13 => thm13_trial(trial, rng, alpha_override),
        Suite::Thm14 => thm14_trial(trial, rng, alpha_override),
        Suite::Cor15 => cor15_trial(trial, rng, alpha_override),
        Suite::Thm16 => thm16_trial(trial, rng, alpha_override),
        Suite::Thm17 => thm17_trial(trial, rng, alpha_override),
    }
}

// ---------------------------------------------------------------------------
// Random instance building blocks.

fn pick_alpha(trial: usize, alpha_override: Option<f64>) -> f64 {
    alpha_override.unwrap_or(ALPHA_CYCLE[trial % ALPHA_CYCLE.len()])
}

fn rand_support(rng: &mut CounterRng, max: usize) -> Arc<Support> {
    let n = 2 + (rng.next_u64() as usize) % (max - 1);
    Support::new((0..n).map(|i| format!("x{i}")).collect())
        .expect("generated point ids are distinct")
}

/// Strictly positive random distribution (floor keeps every divergence
/// finite where the recipe needs that).
fn rand_dist_full(rng: &mut CounterRng, s: &Arc<Support>) -> Dist {
    let floor = 0.2 / s.len() as f64;
    let mut v: Vec<f64> = (0..s.len()).map(|_| rng.uniform() + floor).collect();
    let sum: f64 = v.iter().sum();
    for x in &mut v {
        *x /= sum;
    }
    Dist::new(Arc::clone(s), v).expect("normalized positive vector")
}

/// Random distribution with one point zeroed out, to exercise the
/// extended-real (vacuous) paths in bulk.
fn rand_dist_with_zero(rng: &mut CounterRng, s: &Arc<Support>) -> Dist {
    let mut v: Vec<f64> = (0..s.len()).map(|_| rng.uniform() + 1e-3).collect();
    let dead = (rng.next_u64() as usize) % s.len();
    v[dead] = 0.0;
    let sum: f64 = v.iter().sum();
    for x in &mut v {
        *x /= sum;
    }
    Dist::new(Arc::clone(s), v).expect("normalized nonnegative vector")
}

/// Multiplicative noise then renormalization: keeps the support identical,
/// so divergences between original and perturbation stay finite.
fn perturbed(rng: &mut CounterRng, d: &Dist, strength: f64) -> Dist {
    let mut v: Vec<f64> =
        d.probs().iter().map(|&p| p * (1.0 + strength * (rng.uniform() - 0.5))).collect();
    let sum: f64 = v.iter().sum();
    for x in &mut v {
        *x /= sum;
    }
    Dist::new(Arc::clone(d.support()), v).expect("renormalized positive vector")
}

fn rand_hyp(rng: &mut CounterRng, s: &Arc<Support>, range: f64) -> Hypothesis {
    let v: Vec<f64> = (0..s.len()).map(|_| range * rng.uniform()).collect();
    Hypothesis::new(Arc::clone(s), v, range).expect("values lie in [0, range]")
}

fn rand_bool_hyp(rng: &mut CounterRng, s: &Arc<Support>) -> Hypothesis {
    let v: Vec<f64> = (0..s.len()).map(|_| f64::from(rng.uniform() < 0.5)).collect();
    Hypothesis::new(Arc::clone(s), v, 1.0).expect("Boolean values")
}

/// A hypothesis near `base`: additive noise of the given width, clamped to
/// the range. Used where the recipe wants moderate rather than generic
/// losses.
fn noisy_hyp(rng: &mut CounterRng, base: &Hypothesis, width: f64) -> Hypothesis {
    let range = base.range_bound();
    let v: Vec<f64> = base
        .values()
        .iter()
        .map(|&x| (x + width * (rng.uniform() - 0.5)).clamp(0.0, range))
        .collect();
    Hypothesis::new(Arc::clone(base.support()), v, range).expect("clamped to range")
}

fn rand_weights(rng: &mut CounterRng, k: usize) -> SimplexWeights {
    let raw: Vec<f64> = (0..k).map(|_| rng.uniform() + 1e-6).collect();
    SimplexWeights::normalized(&raw).expect("positive raw weights")
}

fn rand_sources(rng: &mut CounterRng, s: &Arc<Support>, k: usize) -> Vec<Dist> {
    (0..k).map(|_| rand_dist_full(rng, s)).collect()
}

fn max_source_loss(
    sources: &[Dist],
    hyps: &[Hypothesis],
    f: &Hypothesis,
    loss: &LossSpec,
) -> Result<f64> {
    let mut eps = 0.0f64;
    for (q, h) in sources.iter().zip(hyps) {
        eps = eps.max(expected_loss(q, h, f, loss)?);
    }
    Ok(eps)
}

// ---------------------------------------------------------------------------
// Direct two-sided suites.

fn lemma1_trial(
    trial: usize,
    rng: &mut CounterRng,
    alpha_override: Option<f64>,
) -> Result<Vec<BoundReport>> {
    let s = rand_support(rng, MAX_SUPPORT);
    let p = rand_dist_full(rng, &s);
    // Every tenth trial removes a point from Q so the divergence goes
    // infinite and the vacuous path gets bulk coverage.
    let q = if trial % 10 == 9 { rand_dist_with_zero(rng, &s) } else { rand_dist_full(rng, &s) };
    let alpha = AlphaOrder::from_real(pick_alpha(trial, alpha_override))?;
    let (loss, h, f) = match trial % 3 {
        0 => (LossSpec::zero_one(), rand_bool_hyp(rng, &s), rand_bool_hyp(rng, &s)),
        1 => {
            // Alternate the loss range so the M factor gets exercised.
            let m = if trial % 2 == 0 { 1.0 } else { 2.0 };
            (LossSpec::absolute(m)?, rand_hyp(rng, &s, m), rand_hyp(rng, &s, m))
        }
        _ => (LossSpec::squared(1.0)?, rand_hyp(rng, &s, 1.0), rand_bool_hyp(rng, &s)),
    };
    let tight = lemma1_bound(&p, &q, &h, &f, &loss, alpha, true)?;
    let loose = lemma1_bound(&p, &q, &h, &f, &loss, alpha, false)?;
    Ok(vec![tight, loose])
}

fn lemma9_trial(
    trial: usize,
    rng: &mut CounterRng,
    alpha_override: Option<f64>,
) -> Result<Vec<BoundReport>> {
    let s = rand_support(rng, MAX_SUPPORT);
    let k = 1 + (rng.next_u64() as usize) % 3;
    let sources = rand_sources(rng, &s, k);
    let p = if trial % 3 == 0 {
        mixture(&sources, &rand_weights(rng, k))?
    } else {
        rand_dist_full(rng, &s)
    };
    let r = alpha_override.unwrap_or([2.0, 3.0, 5.0, f64::INFINITY][trial % 4]);
    Ok(vec![lemma9_verify(&p, &sources, r)?])
}

fn lemma11_trial(
    trial: usize,
    rng: &mut CounterRng,
    alpha_override: Option<f64>,
) -> Result<Vec<BoundReport>> {
    let s = rand_support(rng, MAX_SUPPORT);
    let k = 1 + (rng.next_u64() as usize) % 4;
    let sources = rand_sources(rng, &s, k);
    let approx: Vec<Dist> = if trial % 7 == 6 {
        // One approximation loses a point: its divergence is infinite, the
        // bound is vacuous, and the report must still hold.
        sources
            .iter()
            .enumerate()
            .map(|(i, q)| if i == 0 { rand_dist_with_zero(rng, &s) } else { perturbed(rng, q, 0.6) })
            .collect()
    } else {
        sources.iter().map(|q| perturbed(rng, q, 0.6)).collect()
    };
    let mu = rand_weights(rng, k);
    let alpha = pick_alpha(trial, alpha_override);
    Ok(vec![lemma11_verify(&sources, &approx, &mu, alpha)?])
}

fn lemma12_trial(
    trial: usize,
    rng: &mut CounterRng,
    alpha_override: Option<f64>,
) -> Result<Vec<BoundReport>> {
    let s = rand_support(rng, MAX_SUPPORT);
    let p = rand_dist_full(rng, &s);
    let q = if trial % 9 == 8 { rand_dist_with_zero(rng, &s) } else { rand_dist_full(rng, &s) };
    let q_hat =
        if trial % 9 == 4 { rand_dist_with_zero(rng, &s) } else { perturbed(rng, &q, 0.6) };
    let alpha = pick_alpha(trial, alpha_override);
    Ok(vec![lemma12_verify(&p, &q, &q_hat, alpha)?])
}

fn thm8_trial(
    trial: usize,
    rng: &mut CounterRng,
    alpha_override: Option<f64>,
) -> Result<Vec<BoundReport>> {
    let s = rand_support(rng, MAX_SUPPORT);
    let k = 1 + (rng.next_u64() as usize) % 3;
    let sources = rand_sources(rng, &s, k);
    let p = if trial % 2 == 0 {
        mixture(&sources, &rand_weights(rng, k))?
    } else {
        rand_dist_full(rng, &s)
    };
    let loss = if trial % 2 == 0 { LossSpec::absolute(1.0)? } else { LossSpec::squared(1.0)? };
    let f = if trial % 3 == 0 { rand_bool_hyp(rng, &s) } else { rand_hyp(rng, &s, 1.0) };
    let hyps: Vec<Hypothesis> = (0..k).map(|_| rand_hyp(rng, &s, 1.0)).collect();
    let r = alpha_override.unwrap_or([1.0, 1.5, 2.0, 3.0, f64::INFINITY][trial % 5]);
    Ok(vec![thm8_verify(&p, &sources, &hyps, &f, &loss, r)?])
}

fn thm10_trial(
    trial: usize,
    rng: &mut CounterRng,
    alpha_override: Option<f64>,
) -> Result<Vec<BoundReport>> {
    let s = rand_support(rng, MAX_SUPPORT);
    let k = 1 + (rng.next_u64() as usize) % 3;
    let sources = rand_sources(rng, &s, k);
    let p = if trial % 2 == 0 {
        mixture(&sources, &rand_weights(rng, k))?
    } else {
        rand_dist_full(rng, &s)
    };
    // Any bounded loss qualifies here, so the 0/1 loss joins the cycle
    // (with Boolean hypotheses, which it requires).
    let (loss, h, f) = match trial % 3 {
        0 => (LossSpec::zero_one(), rand_bool_hyp(rng, &s), rand_bool_hyp(rng, &s)),
        1 => (LossSpec::absolute(1.0)?, rand_hyp(rng, &s, 1.0), rand_hyp(rng, &s, 1.0)),
        _ => (LossSpec::squared(1.0)?, rand_hyp(rng, &s, 1.0), rand_bool_hyp(rng, &s)),
    };
    let r = alpha_override.unwrap_or([2.0, 3.0, 5.0, f64::INFINITY][trial % 4]);
    Ok(vec![thm10_bound(&p, &sources, &h, &f, &loss, r)?])
}

// ---------------------------------------------------------------------------
// Pipeline suites: build the hypothesis the theorem talks about, measure its
// loss, and hand both to the bound.

struct PipelineInstance {
    sources: Vec<Dist>,
    approx: Vec<Dist>,
    hyps: Vec<Hypothesis>,
    f: Hypothesis,
    loss: LossSpec,
    eps: f64,
}

fn pipeline_instance(trial: usize, rng: &mut CounterRng) -> Result<PipelineInstance> {
    let s = rand_support(rng, MAX_PIPELINE_SUPPORT);
    let k = 2 + (rng.next_u64() as usize) % 2;
    let sources = rand_sources(rng, &s, k);
    let approx: Vec<Dist> = sources.iter().map(|q| perturbed(rng, q, 0.5)).collect();
    let f = if trial % 2 == 0 { rand_bool_hyp(rng, &s) } else { rand_hyp(rng, &s, 1.0) };
    // Hypotheses near f keep the source losses moderate, so the bounds are
    // informative rather than saturated.
    let hyps: Vec<Hypothesis> = (0..k).map(|_| noisy_hyp(rng, &f, 0.6)).collect();
    let loss = if trial % 4 < 2 { LossSpec::absolute(1.0)? } else { LossSpec::squared(1.0)? };
    let eps = max_source_loss(&sources, &hyps, &f, &loss)?;
    Ok(PipelineInstance { sources, approx, hyps, f, loss, eps })
}

fn pipeline_target(trial: usize, rng: &mut CounterRng, inst: &PipelineInstance) -> Result<Dist> {
    let k = inst.sources.len();
    match trial % 3 {
        0 => mixture(&inst.sources, &rand_weights(rng, k)),
        1 => {
            let base = mixture(&inst.sources, &rand_weights(rng, k))?;
            Ok(perturbed(rng, &base, 0.8))
        }
        _ => Ok(rand_dist_full(rng, inst.sources[0].support())),
    }
}

fn thm13_trial(
    trial: usize,
    rng: &mut CounterRng,
    alpha_override: Option<f64>,
) -> Result<Vec<BoundReport>> {
    let inst = pipeline_instance(trial, rng)?;
    let p = pipeline_target(trial, rng, &inst)?;
    let alpha = pick_alpha(trial, alpha_override);
    // The theorem's hypothesis: best-fit weights on the approximations,
    // then the distribution-weighted combination of the approximations.
    let fit = fit_mixture(
        &p,
        &inst.approx,
        AlphaOrder::from_real(alpha)?,
        DEFAULT_FIT_TOL,
        DEFAULT_FIT_MAX_ITERS,
    )?;
    let h = combine_distribution_weighted(&inst.approx, &inst.hyps, &fit.weights)?;
    let measured = expected_loss(&p, &h, &inst.f, &inst.loss)?;
    Ok(vec![thm13_bound(
        &p,
        &inst.sources,
        &inst.approx,
        inst.eps,
        inst.loss.bound_m(),
        alpha,
        Some(measured),
    )?])
}

fn thm14_trial(
    trial: usize,
    rng: &mut CounterRng,
    alpha_override: Option<f64>,
) -> Result<Vec<BoundReport>> {
    let inst = pipeline_instance(trial, rng)?;
    let alpha = pick_alpha(trial, alpha_override);
    // The min-max hypothesis over the approximate family, with its
    // achieved slack as the theorem's delta.
    let rf = robust_fit(
        &inst.approx,
        &inst.hyps,
        &inst.f,
        &inst.loss,
        DEFAULT_ROBUST_ETA,
        DEFAULT_ROBUST_DELTA,
        DEFAULT_ROBUST_MAX_ITERS,
    )?;
    let h = combine_smoothed(&inst.approx, &inst.hyps, &rf.weights, rf.eta)?;
    let mut measured = 0.0f64;
    for _ in 0..200 {
        let mu = rand_weights(rng, inst.approx.len());
        let q_mu = mixture(&inst.approx, &mu)?;
        measured = measured.max(expected_loss(&q_mu, &h, &inst.f, &inst.loss)?);
    }
    Ok(vec![thm14_bound(
        &inst.sources,
        &inst.approx,
        inst.eps,
        inst.loss.bound_m(),
        alpha,
        rf.delta,
        Some(measured),
    )?])
}

fn cor15_trial(
    trial: usize,
    rng: &mut CounterRng,
    alpha_override: Option<f64>,
) -> Result<Vec<BoundReport>> {
    let inst = pipeline_instance(trial, rng)?;
    let p = pipeline_target(trial, rng, &inst)?;
    let alpha = pick_alpha(trial, alpha_override);
    let rf = robust_fit(
        &inst.approx,
        &inst.hyps,
        &inst.f,
        &inst.loss,
        DEFAULT_ROBUST_ETA,
        DEFAULT_ROBUST_DELTA,
        DEFAULT_ROBUST_MAX_ITERS,
    )?;
    let h = combine_smoothed(&inst.approx, &inst.hyps, &rf.weights, rf.eta)?;
    let measured = expected_loss(&p, &h, &inst.f, &inst.loss)?;
    Ok(vec![cor15_bound(
        &p,
        &inst.sources,
        &inst.approx,
        inst.eps,
        inst.loss.bound_m(),
        alpha,
        rf.delta,
        Some(measured),
    )?])
}

fn multi_function_instance(
    trial: usize,
    rng: &mut CounterRng,
    loss: LossSpec,
    alpha_override: Option<f64>,
) -> Result<(Dist, Vec<Dist>, Vec<Hypothesis>, Vec<Hypothesis>, Hypothesis, LossSpec, SimplexWeights, AlphaOrder)>
{
    let s = rand_support(rng, MAX_SUPPORT);
    let k = 2 + (rng.next_u64() as usize) % 2;
    let sources = rand_sources(rng, &s, k);
    let p = if trial % 3 == 0 {
        mixture(&sources, &rand_weights(rng, k))?
    } else {
        rand_dist_full(rng, &s)
    };
    let f = if trial % 2 == 0 { rand_bool_hyp(rng, &s) } else { rand_hyp(rng, &s, 1.0) };
    // Source functions drift moderately from f; hypotheses track their own
    // source function, as the theorem assumes.
    let source_fs: Vec<Hypothesis> = (0..k).map(|_| noisy_hyp(rng, &f, 0.4)).collect();
    let hyps: Vec<Hypothesis> = source_fs.iter().map(|fi| noisy_hyp(rng, fi, 0.4)).collect();
    let lambda = rand_weights(rng, k);
    let alpha = AlphaOrder::from_real(pick_alpha(trial, alpha_override))?;
    Ok((p, sources, hyps, source_fs, f, loss, lambda, alpha))
}

fn thm16_trial(
    trial: usize,
    rng: &mut CounterRng,
    alpha_override: Option<f64>,
) -> Result<Vec<BoundReport>> {
    let (p, sources, hyps, source_fs, f, loss, lambda, alpha) =
        multi_function_instance(trial, rng, LossSpec::absolute(1.0)?, alpha_override)?;
    Ok(vec![thm16_verify(&p, &sources, &hyps, &source_fs, &f, &loss, &lambda, alpha)?])
}

fn thm17_trial(
    trial: usize,
    rng: &mut CounterRng,
    alpha_override: Option<f64>,
) -> Result<Vec<BoundReport>> {
    let (p, sources, hyps, source_fs, f, loss, lambda, alpha) =
        multi_function_instance(trial, rng, LossSpec::squared(1.0)?, alpha_override)?;
    Ok(vec![thm17_verify(&p, &sources, &hyps, &source_fs, &f, &loss, &lambda, alpha)?])
}
