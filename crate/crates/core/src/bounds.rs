//! Closed-form loss bounds and verifiers comparing them to measured losses.
//!
//! Every operation produces a [`BoundReport`] pairing the computed
//! `bound_value` with a `measured_value` (either measured here or supplied
//! by the caller for the pure calculators), the signed `margin`, and a
//! digest of the inputs for traceability. Arithmetic is extended-real: an
//! infinite divergence makes the bound infinite, which holds trivially and
//! is flagged `vacuous`.
//!
//! The inequalities, with `gamma = (alpha-1)/alpha` and `M` the loss bound:
//!
//! ```text
//! base        L_P(h,f) <= (d_a(P||Q) L_Q(h,f))^gamma M^(1/a)        (loose)
//!             L_P(h,f) <= (d_a(P||Q) E_Q[L^(a/(a-1))])^gamma        (tight)
//! mixture     L_P(h_l, f) <= (d_a(P||Q) eps)^gamma M^(1/a)
//!             (d_a at the mixture-class optimum; with slack, eps -> eps+delta)
//! r-norm      L_P(h_rnorm, f) <= rho k eps      (P (rho,r)-norm-bounded)
//!             D_r(P||Q_u)     <= log2(k rho)    (rho at order r-1)
//!             L_P(h, f) <= [rho sum_i L_Qi(h,f)]^((r-1)/r) M^(1/r)
//! plug-in     D_a(Q_mu||Qh_mu) <= max_i D_a(Qi||Qhi)
//!             D_a(P||Qh) <= D_2a(P||Q) + D_{2a-1}(Q||Qh)
//!             ...and the composed mixture/min-max forms built from them
//! multi-f     L_P(h_l, f) <= (d_a(P||Q_l) eps)^gamma M^(1/a) + k delta
//!             (beta-relaxed: multiply both terms by beta)
//! ```

use std::fmt;

use sha2::{Digest as _, Sha256};

use crate::combine;
use crate::divergence::{d_alpha, renyi_divergence, AlphaOrder};
use crate::fit::{fit_mixture, DEFAULT_FIT_MAX_ITERS, DEFAULT_FIT_TOL};
use crate::model::{
    expected_loss, expected_power_loss, mixture, same_support, Dist, Hypothesis, LossSpec,
    SimplexWeights,
};
use crate::{Error, Result};

/// Slack allowed when deciding whether a bound holds, absorbing float noise.
pub const HOLD_TOL: f64 = 1e-9;

/// Which inequality a [`BoundReport`] refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TheoremId {
    Lemma1,
    Lemma1Tight,
    Thm2,
    Thm5,
    Thm8,
    Lemma9,
    Thm10,
    Lemma11,
    Lemma12,
    Thm13,
    Thm14,
    Cor15,
    Thm16,
    Thm17,
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TheoremId::Lemma1 => "lemma1",
            TheoremId::Lemma1Tight => "lemma1_tight",
            TheoremId::Thm2 => "thm2",
            TheoremId::Thm5 => "thm5",
            TheoremId::Thm8 => "thm8",
            TheoremId::Lemma9 => "lemma9",
            TheoremId::Thm10 => "thm10",
            TheoremId::Lemma11 => "lemma11",
            TheoremId::Lemma12 => "lemma12",
            TheoremId::Thm13 => "thm13",
            TheoremId::Thm14 => "thm14",
            TheoremId::Cor15 => "cor15",
            TheoremId::Thm16 => "thm16",
            TheoremId::Thm17 => "thm17",
        };
        f.write_str(s)
    }
}

/// One bound/measurement comparison.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub theorem_id: TheoremId,
    /// Upper bound; `+inf` when a divergence factor is infinite.
    pub bound_value: f64,
    /// The quantity the bound dominates (caller-supplied for the pure
    /// calculators; 0 when nothing was measured).
    pub measured_value: f64,
    /// `bound_value - measured_value`, `+inf` for infinite bounds.
    pub margin: f64,
    /// `margin >= -1e-9`.
    pub holds: bool,
    /// The bound is infinite and says nothing.
    pub vacuous: bool,
    /// First 16 hex characters of a SHA-256 over the canonical inputs.
    pub inputs_digest: String,
}

impl BoundReport {
    fn new(theorem_id: TheoremId, bound_value: f64, measured_value: f64, digest: InputDigest) -> Self {
        let margin =
            if bound_value.is_infinite() { f64::INFINITY } else { bound_value - measured_value };
        BoundReport {
            theorem_id,
            bound_value,
            measured_value,
            margin,
            holds: margin >= -HOLD_TOL,
            vacuous: bound_value.is_infinite(),
            inputs_digest: digest.finish(),
        }
    }
}

/// Certificate for Definition-7 style domination
/// `P(x) <= rho [sum_i Q_i^r(x)]^(1/r)`.
#[derive(Debug, Clone)]
pub struct NormBoundCert {
    /// Smallest admissible factor (`+inf` when P charges a point where the
    /// denominator vanishes, i.e. no finite certificate exists).
    pub rho: f64,
    pub r: f64,
    /// `worst_ratio <= rho`; true by construction for the minimal rho.
    pub holds: bool,
    pub worst_point: String,
    pub worst_ratio: f64,
}

/// Canonical input hashing so reports can be traced back to their inputs.
struct InputDigest {
    hasher: Sha256,
}

impl InputDigest {
    fn new(tag: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(tag.as_bytes());
        InputDigest { hasher }
    }

    fn f64(mut self, v: f64) -> Self {
        self.hasher.update(v.to_bits().to_le_bytes());
        self
    }

    fn f64s(mut self, vs: &[f64]) -> Self {
        self.hasher.update((vs.len() as u64).to_le_bytes());
        for v in vs {
            self.hasher.update(v.to_bits().to_le_bytes());
        }
        self
    }

    fn flag(mut self, b: bool) -> Self {
        self.hasher.update([u8::from(b)]);
        self
    }

    fn dist(self, d: &Dist) -> Self {
        self.f64s(d.probs())
    }

    fn dists(mut self, ds: &[Dist]) -> Self {
        self.hasher.update((ds.len() as u64).to_le_bytes());
        for d in ds {
            self = self.dist(d);
        }
        self
    }

    fn hyp(self, h: &Hypothesis) -> Self {
        self.f64s(h.values()).f64(h.range_bound())
    }

    fn hyps(mut self, hs: &[Hypothesis]) -> Self {
        self.hasher.update((hs.len() as u64).to_le_bytes());
        for h in hs {
            self = self.hyp(h);
        }
        self
    }

    fn loss(self, l: &LossSpec) -> Self {
        let kind = format!("{:?}", l.kind());
        let mut s = self;
        s.hasher.update(kind.as_bytes());
        s.f64(l.bound_m())
    }

    fn finish(self) -> String {
        let bytes = self.hasher.finalize();
        bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Extended-real product: any infinite factor (all operands nonnegative)
/// makes the result infinite, avoiding `inf * 0 = NaN`.
fn xmul(a: f64, b: f64) -> f64 {
    if a.is_infinite() || b.is_infinite() {
        f64::INFINITY
    } else {
        a * b
    }
}

fn ensure_same_supports(base: &Dist, others: &[&Dist]) -> Result<()> {
    for o in others {
        if !same_support(base.support(), o.support()) {
            return Err(Error::SupportMismatch);
        }
    }
    Ok(())
}

fn ensure_alpha_above_one(alpha: AlphaOrder) -> Result<()> {
    if alpha.is_above_one() {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(format!("the bound needs alpha > 1, got {alpha}")))
    }
}

fn order_above_one(alpha: f64) -> Result<AlphaOrder> {
    if alpha > 1.0 {
        AlphaOrder::from_real(alpha)
    } else {
        Err(Error::InvalidAlpha(format!("the bound needs alpha > 1, got {alpha}")))
    }
}

fn ensure_eps_in_range(eps: f64, loss_m: f64) -> Result<()> {
    if !(loss_m.is_finite() && loss_m > 0.0) {
        return Err(Error::InvalidParameter(format!("loss bound M must be positive, got {loss_m}")));
    }
    if !(eps.is_finite() && (0.0..=loss_m).contains(&eps)) {
        return Err(Error::InvalidParameter(format!("eps must lie in [0, M={loss_m}], got {eps}")));
    }
    Ok(())
}

/// Base inequality relating target loss to source loss through the
/// divergence. The loose form is `(d_a L_Q)^gamma M^(1/a)`; the tight form
/// replaces `L_Q M^(1/(a-1))` by the smaller `E_Q[L^(a/(a-1))]` and carries
/// no `M` factor. Both collapse to `d_inf * L_Q` at order infinity.
pub fn lemma1_bound(
    p: &Dist,
    q: &Dist,
    h: &Hypothesis,
    f: &Hypothesis,
    loss: &LossSpec,
    alpha: AlphaOrder,
    tight: bool,
) -> Result<BoundReport> {
    ensure_alpha_above_one(alpha)?;
    ensure_same_supports(p, &[q])?;
    let measured = expected_loss(p, h, f, loss)?;
    let d = renyi_divergence(p, q, alpha)?;
    let gamma = alpha.gamma();
    let bound = if d.is_infinite() {
        f64::INFINITY
    } else if tight {
        let inner = match alpha {
            AlphaOrder::Infinity => expected_loss(q, h, f, loss)?,
            _ => expected_power_loss(q, h, f, loss, alpha.as_f64() / (alpha.as_f64() - 1.0))?,
        };
        (d.linear() * inner).powf(gamma)
    } else {
        let lq = expected_loss(q, h, f, loss)?;
        (d.linear() * lq).powf(gamma) * alpha.m_root(loss.bound_m())
    };
    let digest = InputDigest::new("lemma1")
        .dist(p)
        .dist(q)
        .hyp(h)
        .hyp(f)
        .loss(loss)
        .f64(alpha.as_f64())
        .flag(tight);
    let id = if tight { TheoremId::Lemma1Tight } else { TheoremId::Lemma1 };
    Ok(BoundReport::new(id, bound, measured, digest))
}

/// `(d_a(P||Q) eps)^gamma M^(1/a)` with `d_a` at the mixture-class optimum.
/// A what-if calculator: `measured` is whatever loss the caller wants the
/// bound compared against (0 when absent).
pub fn thm2_bound(
    p: &Dist,
    sources: &[Dist],
    eps: f64,
    loss_m: f64,
    alpha: AlphaOrder,
    measured: Option<f64>,
) -> Result<BoundReport> {
    ensure_alpha_above_one(alpha)?;
    ensure_eps_in_range(eps, loss_m)?;
    let fit = fit_mixture(p, sources, alpha, DEFAULT_FIT_TOL, DEFAULT_FIT_MAX_ITERS)?;
    let d = fit.objective_bits.exp2();
    let bound = (d * eps).powf(alpha.gamma()) * alpha.m_root(loss_m);
    let digest = InputDigest::new("thm2")
        .dist(p)
        .dists(sources)
        .f64(eps)
        .f64(loss_m)
        .f64(alpha.as_f64());
    Ok(BoundReport::new(TheoremId::Thm2, bound, measured.unwrap_or(0.0), digest))
}

/// As [`thm2_bound`] with the source-level guarantee relaxed to
/// `eps + delta` (the min-max solver's slack).
pub fn thm5_bound(
    p: &Dist,
    sources: &[Dist],
    eps: f64,
    delta: f64,
    loss_m: f64,
    alpha: AlphaOrder,
    measured: Option<f64>,
) -> Result<BoundReport> {
    ensure_alpha_above_one(alpha)?;
    ensure_eps_in_range(eps, loss_m)?;
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be nonnegative, got {delta}")));
    }
    let fit = fit_mixture(p, sources, alpha, DEFAULT_FIT_TOL, DEFAULT_FIT_MAX_ITERS)?;
    let d = fit.objective_bits.exp2();
    let bound = (d * (eps + delta)).powf(alpha.gamma()) * alpha.m_root(loss_m);
    let digest = InputDigest::new("thm5")
        .dist(p)
        .dists(sources)
        .f64(eps)
        .f64(delta)
        .f64(loss_m)
        .f64(alpha.as_f64());
    Ok(BoundReport::new(TheoremId::Thm5, bound, measured.unwrap_or(0.0), digest))
}

/// Computes the smallest `rho` with `P(x) <= rho [sum_i Q_i^r(x)]^(1/r)`
/// everywhere; `rho = +inf` when P charges a point where every source
/// vanishes. `r = inf` uses the max norm.
pub fn check_norm_bounded(p: &Dist, sources: &[Dist], r: f64) -> Result<NormBoundCert> {
    if sources.is_empty() {
        return Err(Error::Empty("sources"));
    }
    ensure_same_supports(p, &sources.iter().collect::<Vec<_>>())?;
    if !(r >= 1.0) {
        return Err(Error::InvalidParameter(format!("norm order r must be >= 1, got {r}")));
    }
    let mut worst_ratio = f64::NEG_INFINITY;
    let mut worst_point = 0;
    for x in 0..p.len() {
        let q_max = sources.iter().map(|q| q.probs()[x]).fold(0.0, f64::max);
        // Shifted power sum keeps q^r from underflowing for large r.
        let denom = if q_max == 0.0 {
            0.0
        } else if r.is_infinite() {
            q_max
        } else {
            let sum: f64 = sources.iter().map(|q| (q.probs()[x] / q_max).powf(r)).sum();
            q_max * sum.powf(1.0 / r)
        };
        let mass = p.probs()[x];
        let ratio = if mass == 0.0 {
            0.0
        } else if denom == 0.0 {
            f64::INFINITY
        } else {
            mass / denom
        };
        if ratio > worst_ratio {
            worst_ratio = ratio;
            worst_point = x;
        }
    }
    Ok(NormBoundCert {
        rho: worst_ratio,
        r,
        holds: worst_ratio <= worst_ratio,
        worst_point: p.support().id(worst_point).to_string(),
        worst_ratio,
    })
}

/// `L_P(h_rnorm, f) <= rho k eps` for a norm-dominated target, with the
/// r-norm combiner measured directly. Needs a convex loss (the combiner is
/// a pointwise convex combination) and a finite certificate.
pub fn thm8_verify(
    p: &Dist,
    sources: &[Dist],
    hyps: &[Hypothesis],
    f: &Hypothesis,
    loss: &LossSpec,
    r: f64,
) -> Result<BoundReport> {
    if !loss.is_convex() {
        return Err(Error::InvalidParameter(
            "the r-norm bound needs a loss convex in the prediction".into(),
        ));
    }
    let cert = check_norm_bounded(p, sources, r)?;
    if !cert.rho.is_finite() {
        return Err(Error::Infeasible(format!(
            "no finite norm certificate: P charges {} where every source vanishes",
            cert.worst_point
        )));
    }
    let mut eps = 0.0f64;
    for (q, h) in sources.iter().zip(hyps) {
        eps = eps.max(expected_loss(q, h, f, loss)?);
    }
    let bound = cert.rho * sources.len() as f64 * eps;
    let combined = combine::combine_r_norm(sources, hyps, r)?;
    let measured = expected_loss(p, &combined, f, loss)?;
    let digest = InputDigest::new("thm8")
        .dist(p)
        .dists(sources)
        .hyps(hyps)
        .hyp(f)
        .loss(loss)
        .f64(r);
    Ok(BoundReport::new(TheoremId::Thm8, bound, measured, digest))
}

/// `D_r(P || Q_u) <= log2(k rho)` where `Q_u` is the uniform source mixture
/// and `rho` certifies norm-boundedness at order `r - 1`; needs `r >= 2`.
pub fn lemma9_verify(p: &Dist, sources: &[Dist], r: f64) -> Result<BoundReport> {
    if !(r >= 2.0) {
        return Err(Error::InvalidParameter(format!(
            "the divergence-vs-norm bound needs r >= 2, got {r}"
        )));
    }
    let order_down = if r.is_infinite() { f64::INFINITY } else { r - 1.0 };
    let cert = check_norm_bounded(p, sources, order_down)?;
    let q_u = mixture(sources, &SimplexWeights::uniform(sources.len())?)?;
    let measured = renyi_divergence(p, &q_u, AlphaOrder::from_real(r)?)?;
    let bound = if cert.rho.is_finite() {
        (sources.len() as f64 * cert.rho).log2().max(0.0)
    } else {
        f64::INFINITY
    };
    let digest = InputDigest::new("lemma9").dist(p).dists(sources).f64(r);
    Ok(BoundReport::new(TheoremId::Lemma9, bound, measured.bits(), digest))
}

/// `L_P(h, f) <= [rho sum_i L_Qi(h, f)]^((r-1)/r) M^(1/r)` with `rho` at
/// order `r - 1`; any bounded loss, `r >= 2`, finite certificate required.
pub fn thm10_bound(
    p: &Dist,
    sources: &[Dist],
    h: &Hypothesis,
    f: &Hypothesis,
    loss: &LossSpec,
    r: f64,
) -> Result<BoundReport> {
    if !(r >= 2.0) {
        return Err(Error::InvalidParameter(format!(
            "the summed-loss bound needs r >= 2, got {r}"
        )));
    }
    let order_down = if r.is_infinite() { f64::INFINITY } else { r - 1.0 };
    let cert = check_norm_bounded(p, sources, order_down)?;
    if !cert.rho.is_finite() {
        return Err(Error::Infeasible(format!(
            "no finite norm certificate: P charges {} where every source vanishes",
            cert.worst_point
        )));
    }
    let mut sum = 0.0;
    for q in sources {
        sum += expected_loss(q, h, f, loss)?;
    }
    let (gamma_r, m_root) = if r.is_infinite() {
        (1.0, 1.0)
    } else {
        ((r - 1.0) / r, loss.bound_m().powf(1.0 / r))
    };
    let bound = (cert.rho * sum).powf(gamma_r) * m_root;
    let measured = expected_loss(p, h, f, loss)?;
    let digest = InputDigest::new("thm10")
        .dist(p)
        .dists(sources)
        .hyp(h)
        .hyp(f)
        .loss(loss)
        .f64(r);
    Ok(BoundReport::new(TheoremId::Thm10, bound, measured, digest))
}

/// `D_a(Q_mu || Qh_mu) <= max_i D_a(Q_i || Qh_i)`: mixing cannot increase
/// the divergence to the matching mixture of plug-ins.
pub fn lemma11_verify(
    sources: &[Dist],
    approx: &[Dist],
    mu: &SimplexWeights,
    alpha: f64,
) -> Result<BoundReport> {
    let order = order_above_one(alpha)?;
    if approx.len() != sources.len() {
        return Err(Error::LengthMismatch { expected: sources.len(), got: approx.len() });
    }
    if mu.len() != sources.len() {
        return Err(Error::LengthMismatch { expected: sources.len(), got: mu.len() });
    }
    let q_mu = mixture(sources, mu)?;
    let qh_mu = mixture(approx, mu)?;
    let measured = renyi_divergence(&q_mu, &qh_mu, order)?;
    let mut bound = 0.0f64;
    for (q, qh) in sources.iter().zip(approx) {
        bound = bound.max(renyi_divergence(q, qh, order)?.bits());
    }
    let digest = InputDigest::new("lemma11")
        .dists(sources)
        .dists(approx)
        .f64s(mu.as_slice())
        .f64(alpha);
    Ok(BoundReport::new(TheoremId::Lemma11, bound, measured.bits(), digest))
}

/// Triangle-like decomposition of the divergence through an intermediate
/// distribution, at the cost of roughly doubling the order:
///
/// ```text
/// D_a(P||Qh) <= (2a-1)/(2a-2) D_2a(P||Q) + D_{2a-1}(Q||Qh)
/// ```
///
/// The first-term coefficient is what the Cauchy-Schwarz argument yields
/// (it tends to 1 as a grows and is exactly 1 at a = inf). The plain
/// unweighted sum is NOT an upper bound — see the regression test for a
/// two-point instance that beats it by 0.39 bits.
pub fn lemma12_verify(p: &Dist, q: &Dist, q_hat: &Dist, alpha: f64) -> Result<BoundReport> {
    let order = order_above_one(alpha)?;
    ensure_same_supports(p, &[q, q_hat])?;
    let measured = renyi_divergence(p, q_hat, order)?;
    let up = renyi_divergence(p, q, double_order(alpha)?)?;
    let mid = renyi_divergence(q, q_hat, double_order_minus_one(alpha)?)?;
    let bound = half_step_coefficient(alpha) * up.bits() + mid.bits();
    let digest = InputDigest::new("lemma12").dist(p).dist(q).dist(q_hat).f64(alpha);
    Ok(BoundReport::new(TheoremId::Lemma12, bound, measured.bits(), digest))
}

/// `(2a-1)/(2a-2)`: the weight the order-doubling decomposition puts on
/// the doubled-order term.
fn half_step_coefficient(alpha: f64) -> f64 {
    if alpha.is_infinite() {
        1.0
    } else {
        (2.0 * alpha - 1.0) / (2.0 * alpha - 2.0)
    }
}

fn gamma_of(alpha: f64) -> f64 {
    if alpha.is_infinite() {
        1.0
    } else {
        (alpha - 1.0) / alpha
    }
}

fn double_order(alpha: f64) -> Result<AlphaOrder> {
    order_above_one(if alpha.is_infinite() { alpha } else { 2.0 * alpha })
}

fn double_order_minus_one(alpha: f64) -> Result<AlphaOrder> {
    order_above_one(if alpha.is_infinite() { alpha } else { 2.0 * alpha - 1.0 })
}

/// Known target, plug-in sources: the bound on the loss of the combiner
/// built from the plug-ins at their own best-fit weights,
///
/// ```text
/// eps^g d_2a^g(P||Q) M^((1+g)/a) max_i d_{2a-1}^g(Qi||Qhi) max_i d_a^g(Qhi||Qi)
/// ```
///
/// with `d_2a(P||Q)` at the true-mixture optimum. Pure calculator:
/// `measured` comes from the caller's pipeline.
pub fn thm13_bound(
    p: &Dist,
    sources: &[Dist],
    approx: &[Dist],
    eps: f64,
    loss_m: f64,
    alpha: f64,
    measured: Option<f64>,
) -> Result<BoundReport> {
    let order = order_above_one(alpha)?;
    ensure_eps_in_range(eps, loss_m)?;
    if approx.len() != sources.len() {
        return Err(Error::LengthMismatch { expected: sources.len(), got: approx.len() });
    }
    let fit = fit_mixture(p, sources, double_order(alpha)?, DEFAULT_FIT_TOL, DEFAULT_FIT_MAX_ITERS)?;
    let d_two = fit.objective_bits.exp2();
    let mut max_mid = 1.0f64;
    let mut max_back = 1.0f64;
    for (q, qh) in sources.iter().zip(approx) {
        max_mid = max_mid.max(d_alpha(q, qh, double_order_minus_one(alpha)?)?);
        max_back = max_back.max(d_alpha(qh, q, order)?);
    }
    let g = gamma_of(alpha);
    let m_exp = if alpha.is_infinite() { 0.0 } else { (1.0 + g) / alpha };
    let bound = if max_mid.is_infinite() || max_back.is_infinite() {
        f64::INFINITY
    } else {
        eps.powf(g) * d_two.powf(g) * loss_m.powf(m_exp) * max_mid.powf(g) * max_back.powf(g)
    };
    let digest = InputDigest::new("thm13")
        .dist(p)
        .dists(sources)
        .dists(approx)
        .f64(eps)
        .f64(loss_m)
        .f64(alpha);
    Ok(BoundReport::new(TheoremId::Thm13, bound, measured.unwrap_or(0.0), digest))
}

/// Unknown target, plug-in sources: any mixture of the plug-ins satisfies
/// `L <= [max_i d_a(Qhi||Qi) eps]^g M^(1/a) + delta` for the min-max
/// hypothesis with achieved slack `delta`. Pure calculator.
pub fn thm14_bound(
    sources: &[Dist],
    approx: &[Dist],
    eps: f64,
    loss_m: f64,
    alpha: f64,
    delta: f64,
    measured: Option<f64>,
) -> Result<BoundReport> {
    let order = order_above_one(alpha)?;
    ensure_eps_in_range(eps, loss_m)?;
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be nonnegative, got {delta}")));
    }
    if approx.len() != sources.len() {
        return Err(Error::LengthMismatch { expected: sources.len(), got: approx.len() });
    }
    let mut max_back = 1.0f64;
    for (q, qh) in sources.iter().zip(approx) {
        max_back = max_back.max(d_alpha(qh, q, order)?);
    }
    let g = gamma_of(alpha);
    let bound = xmul(max_back, eps).powf(g) * order.m_root(loss_m) + delta;
    let digest = InputDigest::new("thm14")
        .dists(sources)
        .dists(approx)
        .f64(eps)
        .f64(loss_m)
        .f64(alpha)
        .f64(delta);
    Ok(BoundReport::new(TheoremId::Thm14, bound, measured.unwrap_or(0.0), digest))
}

/// Arbitrary target against the plug-in min-max hypothesis: composes the
/// plug-in source-loss bound with the order-doubling decomposition of
/// `D_a(P||Qh)`,
///
/// ```text
/// [dh (eps_hat + delta)]^g M^(1/a)
///   with eps_hat = [max_i d_a(Qhi||Qi) eps]^g M^(1/a)
///   and  dh = 2^( D_2a(P||Q)_fit + max_i D_{2a-1}(Qi||Qhi) )
/// ```
pub fn cor15_bound(
    p: &Dist,
    sources: &[Dist],
    approx: &[Dist],
    eps: f64,
    loss_m: f64,
    alpha: f64,
    delta: f64,
    measured: Option<f64>,
) -> Result<BoundReport> {
    let order = order_above_one(alpha)?;
    ensure_eps_in_range(eps, loss_m)?;
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be nonnegative, got {delta}")));
    }
    if approx.len() != sources.len() {
        return Err(Error::LengthMismatch { expected: sources.len(), got: approx.len() });
    }
    let mut max_back = 1.0f64;
    let mut max_mid_bits = 0.0f64;
    for (q, qh) in sources.iter().zip(approx) {
        max_back = max_back.max(d_alpha(qh, q, order)?);
        max_mid_bits = max_mid_bits.max(renyi_divergence(q, qh, double_order_minus_one(alpha)?)?.bits());
    }
    let fit = fit_mixture(p, sources, double_order(alpha)?, DEFAULT_FIT_TOL, DEFAULT_FIT_MAX_ITERS)?;
    let g = gamma_of(alpha);
    let eps_hat = xmul(max_back, eps).powf(g) * order.m_root(loss_m);
    let d_hat = (fit.objective_bits + max_mid_bits).exp2();
    let bound = xmul(d_hat, eps_hat + delta).powf(g) * order.m_root(loss_m);
    let digest = InputDigest::new("cor15")
        .dist(p)
        .dists(sources)
        .dists(approx)
        .f64(eps)
        .f64(loss_m)
        .f64(alpha)
        .f64(delta);
    Ok(BoundReport::new(TheoremId::Cor15, bound, measured.unwrap_or(0.0), digest))
}

fn multi_function_inputs(
    sources: &[Dist],
    hyps: &[Hypothesis],
    source_fs: &[Hypothesis],
) -> Result<()> {
    if hyps.len() != sources.len() {
        return Err(Error::LengthMismatch { expected: sources.len(), got: hyps.len() });
    }
    if source_fs.len() != sources.len() {
        return Err(Error::LengthMismatch { expected: sources.len(), got: source_fs.len() });
    }
    Ok(())
}

fn multi_function_verify(
    p: &Dist,
    sources: &[Dist],
    hyps: &[Hypothesis],
    source_fs: &[Hypothesis],
    f: &Hypothesis,
    loss: &LossSpec,
    lambda: &SimplexWeights,
    alpha: AlphaOrder,
    beta: f64,
    id: TheoremId,
) -> Result<BoundReport> {
    ensure_alpha_above_one(alpha)?;
    multi_function_inputs(sources, hyps, source_fs)?;
    let k = sources.len() as f64;
    // eps covers each hypothesis against its own source function on its own
    // source; delta covers the source functions' drift from f on the target.
    let mut eps = 0.0f64;
    for ((q, h), fi) in sources.iter().zip(hyps).zip(source_fs) {
        eps = eps.max(expected_loss(q, h, fi, loss)?);
    }
    let mut delta = 0.0f64;
    for fi in source_fs {
        delta = delta.max(expected_loss(p, fi, f, loss)?);
    }
    let q_lambda = mixture(sources, lambda)?;
    let d = renyi_divergence(p, &q_lambda, alpha)?;
    let bound = if d.is_infinite() {
        f64::INFINITY
    } else {
        beta * (d.linear() * eps).powf(alpha.gamma()) * alpha.m_root(loss.bound_m())
            + beta * k * delta
    };
    let combined = combine::combine_distribution_weighted(sources, hyps, lambda)?;
    let measured = expected_loss(p, &combined, f, loss)?;
    let digest = InputDigest::new(if beta == 1.0 { "thm16" } else { "thm17" })
        .dist(p)
        .dists(sources)
        .hyps(hyps)
        .hyps(source_fs)
        .hyp(f)
        .loss(loss)
        .f64s(lambda.as_slice())
        .f64(alpha.as_f64())
        .f64(beta);
    Ok(BoundReport::new(id, bound, measured, digest))
}

/// Per-source target functions, exact triangle inequality:
/// `L_P(h_l, f) <= [d_a(P||Q_l) eps]^g M^(1/a) + k delta` at the given
/// weights, where `eps = max_i L_Qi(h_i, f_i)` and `delta = max_i L_P(f_i, f)`.
pub fn thm16_verify(
    p: &Dist,
    sources: &[Dist],
    hyps: &[Hypothesis],
    source_fs: &[Hypothesis],
    f: &Hypothesis,
    loss: &LossSpec,
    lambda: &SimplexWeights,
    alpha: AlphaOrder,
) -> Result<BoundReport> {
    if !loss.is_convex() || loss.beta() != 1.0 {
        return Err(Error::InvalidParameter(
            "the multi-function bound needs a convex loss with the exact triangle inequality"
                .into(),
        ));
    }
    multi_function_verify(p, sources, hyps, source_fs, f, loss, lambda, alpha, 1.0, TheoremId::Thm16)
}

/// As [`thm16_verify`] for losses with only the beta-relaxed triangle
/// inequality: both terms pick up the factor beta.
pub fn thm17_verify(
    p: &Dist,
    sources: &[Dist],
    hyps: &[Hypothesis],
    source_fs: &[Hypothesis],
    f: &Hypothesis,
    loss: &LossSpec,
    lambda: &SimplexWeights,
    alpha: AlphaOrder,
) -> Result<BoundReport> {
    if !loss.is_convex() || !(loss.beta() >= 1.0) {
        return Err(Error::InvalidParameter(
            "the relaxed multi-function bound needs a convex loss with beta >= 1".into(),
        ));
    }
    multi_function_verify(
        p,
        sources,
        hyps,
        source_fs,
        f,
        loss,
        lambda,
        alpha,
        loss.beta(),
        TheoremId::Thm17,
    )
}
