//! Renyi entropy and divergence of arbitrary order, in bits.
//!
//! For a distribution `P` on a finite set, the Renyi entropy of order
//! `alpha` is
//!
//! ```text
//! H_alpha(P) = 1/(1-alpha) * log2( sum_x P(x)^alpha )
//! ```
//!
//! with the conventions `H_0 = log2 |supp P|` (Hartley), `H_1 = Shannon`,
//! and `H_inf = -log2 max_x P(x)` (min-entropy). The divergence of order
//! `alpha` between `P` and `Q` is
//!
//! ```text
//! D_alpha(P || Q) = 1/(alpha-1) * log2( sum_x P(x) * (P(x)/Q(x))^(alpha-1) )
//! ```
//!
//! with `D_1 = KL` and `D_inf = log2 sup_{P(x)>0} P(x)/Q(x)`. The exponential
//! `d_alpha = 2^{D_alpha}` is the quantity that enters the adaptation bounds.
//!
//! `D_alpha` is infinite exactly when the sum diverges; for `alpha >= 1`
//! that happens when `P` charges a point where `Q` vanishes. Infinity is a
//! first-class value here ([`DivergenceValue::is_infinite`]), not an error.
//! Finite orders are evaluated in log space with a max-shifted log-sum-exp,
//! so very large `alpha` (used to approximate the order-infinity limit)
//! neither overflows nor underflows.

use std::fmt;
use std::str::FromStr;

use crate::model::Dist;
use crate::{model, Error, Result};

const LN_2: f64 = std::f64::consts::LN_2;

/// The order of a Renyi entropy or divergence.
///
/// The values 0, 1, and infinity get dedicated variants because their
/// formulas are limits, not instances, of the finite-order expression;
/// [`AlphaOrder::finite`] therefore rejects them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaOrder {
    Zero,
    One,
    /// A finite order `alpha > 0`, `alpha != 1`.
    Finite(f64),
    Infinity,
}

impl AlphaOrder {
    /// A finite order; rejects non-finite values, `alpha <= 0`, and
    /// `alpha = 1` (use the dedicated variants instead).
    pub fn finite(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::InvalidAlpha(format!("alpha must be positive, got {alpha}")));
        }
        if alpha == 1.0 {
            return Err(Error::InvalidAlpha(
                "alpha = 1 uses AlphaOrder::One (Shannon/KL limit)".into(),
            ));
        }
        Ok(AlphaOrder::Finite(alpha))
    }

    /// Maps a real onto the matching variant: `0` and `1` to their dedicated
    /// limits, `+inf` to [`AlphaOrder::Infinity`], anything else through
    /// [`AlphaOrder::finite`].
    pub fn from_real(alpha: f64) -> Result<Self> {
        if alpha == 0.0 {
            Ok(AlphaOrder::Zero)
        } else if alpha == 1.0 {
            Ok(AlphaOrder::One)
        } else if alpha.is_infinite() && alpha > 0.0 {
            Ok(AlphaOrder::Infinity)
        } else {
            AlphaOrder::finite(alpha)
        }
    }

    /// Numeric value of the order (`inf` for [`AlphaOrder::Infinity`]).
    pub fn as_f64(&self) -> f64 {
        match self {
            AlphaOrder::Zero => 0.0,
            AlphaOrder::One => 1.0,
            AlphaOrder::Finite(a) => *a,
            AlphaOrder::Infinity => f64::INFINITY,
        }
    }

    /// True for orders strictly above 1, where the adaptation bounds apply.
    pub fn is_above_one(&self) -> bool {
        matches!(self, AlphaOrder::Infinity) || matches!(self, AlphaOrder::Finite(a) if *a > 1.0)
    }

    /// The Holder exponent `(alpha-1)/alpha`, which tends to 1 at infinite
    /// order. Only meaningful for orders above 1.
    pub fn gamma(&self) -> f64 {
        match self {
            AlphaOrder::Infinity => 1.0,
            _ => {
                let a = self.as_f64();
                (a - 1.0) / a
            }
        }
    }

    /// `M^{1/alpha}`, the capped-loss factor of the bounds, which tends to 1
    /// at infinite order.
    pub fn m_root(&self, m: f64) -> f64 {
        match self {
            AlphaOrder::Infinity => 1.0,
            _ => m.powf(1.0 / self.as_f64()),
        }
    }
}

impl FromStr for AlphaOrder {
    type Err = Error;

    /// Accepts `zero`, `one`, `inf`/`infinity`, or a positive number
    /// (`0` and `1` map to their dedicated variants).
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "zero" => Ok(AlphaOrder::Zero),
            "one" => Ok(AlphaOrder::One),
            "inf" | "infinity" => Ok(AlphaOrder::Infinity),
            other => {
                let a: f64 = other
                    .parse()
                    .map_err(|_| Error::InvalidAlpha(format!("unrecognized order {s:?}")))?;
                if a == 0.0 {
                    Ok(AlphaOrder::Zero)
                } else if a == 1.0 {
                    Ok(AlphaOrder::One)
                } else if a.is_infinite() && a > 0.0 {
                    Ok(AlphaOrder::Infinity)
                } else {
                    AlphaOrder::finite(a)
                }
            }
        }
    }
}

impl fmt::Display for AlphaOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaOrder::Zero => write!(f, "zero"),
            AlphaOrder::One => write!(f, "one"),
            AlphaOrder::Finite(a) => write!(f, "{a}"),
            AlphaOrder::Infinity => write!(f, "inf"),
        }
    }
}

/// A possibly-infinite divergence, in bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceValue {
    bits: f64,
    is_infinite: bool,
}

impl DivergenceValue {
    pub fn finite(bits: f64) -> Self {
        debug_assert!(bits.is_finite() && bits >= 0.0);
        DivergenceValue { bits, is_infinite: false }
    }

    pub fn infinite() -> Self {
        DivergenceValue { bits: f64::INFINITY, is_infinite: true }
    }

    /// The value in bits; `f64::INFINITY` when infinite.
    pub fn bits(&self) -> f64 {
        self.bits
    }

    pub fn is_infinite(&self) -> bool {
        self.is_infinite
    }

    /// The exponential `d_alpha = 2^{D_alpha}`, always `>= 1`.
    pub fn linear(&self) -> f64 {
        if self.is_infinite {
            f64::INFINITY
        } else {
            self.bits.exp2().max(1.0)
        }
    }
}

/// `log2( sum exp(t) )` over log-scale terms, shifted by the maximum so that
/// huge negative or positive terms neither underflow the sum nor overflow it.
fn log2_sum_exp(terms: &[f64]) -> f64 {
    debug_assert!(!terms.is_empty());
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = terms.iter().map(|t| (t - m).exp()).sum();
    (m + sum.ln()) / LN_2
}

/// Renyi entropy `H_alpha(P)` in bits.
pub fn renyi_entropy(p: &Dist, alpha: AlphaOrder) -> f64 {
    let probs = p.probs();
    let h = match alpha {
        AlphaOrder::Zero => {
            let support_size = probs.iter().filter(|&&v| v > 0.0).count();
            (support_size as f64).log2()
        }
        AlphaOrder::One => {
            -probs.iter().filter(|&&v| v > 0.0).map(|&v| v * v.log2()).sum::<f64>()
        }
        AlphaOrder::Infinity => {
            let max = probs.iter().copied().fold(0.0, f64::max);
            -max.log2()
        }
        AlphaOrder::Finite(a) => {
            let terms: Vec<f64> =
                probs.iter().filter(|&&v| v > 0.0).map(|&v| a * v.ln()).collect();
            log2_sum_exp(&terms) / (1.0 - a)
        }
    };
    // Entropy of a distribution is non-negative; clamp rounding droop.
    h.max(0.0)
}

/// Renyi divergence `D_alpha(P || Q)` in bits. Requires a shared support and
/// an order other than zero.
pub fn renyi_divergence(p: &Dist, q: &Dist, alpha: AlphaOrder) -> Result<DivergenceValue> {
    if !model::same_support(p.support(), q.support()) {
        return Err(Error::SupportMismatch);
    }
    let bits = match alpha {
        AlphaOrder::Zero => {
            return Err(Error::InvalidAlpha("divergence of order zero is undefined".into()))
        }
        AlphaOrder::One => {
            let mut kl = 0.0;
            for (&pv, &qv) in p.probs().iter().zip(q.probs()) {
                if pv > 0.0 {
                    if qv == 0.0 {
                        return Ok(DivergenceValue::infinite());
                    }
                    kl += pv * (pv.ln() - qv.ln());
                }
            }
            kl / LN_2
        }
        AlphaOrder::Infinity => {
            let mut max_ratio_ln = f64::NEG_INFINITY;
            for (&pv, &qv) in p.probs().iter().zip(q.probs()) {
                if pv > 0.0 {
                    if qv == 0.0 {
                        return Ok(DivergenceValue::infinite());
                    }
                    max_ratio_ln = max_ratio_ln.max(pv.ln() - qv.ln());
                }
            }
            max_ratio_ln / LN_2
        }
        AlphaOrder::Finite(a) => {
            // sum_x P^alpha Q^(1-alpha), accumulated in log scale.
            let mut terms = Vec::with_capacity(p.len());
            for (&pv, &qv) in p.probs().iter().zip(q.probs()) {
                if pv > 0.0 {
                    if qv == 0.0 {
                        if a > 1.0 {
                            return Ok(DivergenceValue::infinite());
                        }
                        // alpha < 1: the term P^alpha Q^(1-alpha) vanishes.
                        continue;
                    }
                    terms.push(a * pv.ln() + (1.0 - a) * qv.ln());
                }
            }
            if terms.is_empty() {
                // Disjoint supports at alpha < 1: the sum is 0 and the
                // divergence diverges.
                return Ok(DivergenceValue::infinite());
            }
            log2_sum_exp(&terms) / (a - 1.0)
        }
    };
    if bits.is_infinite() {
        return Ok(DivergenceValue::infinite());
    }
    // Divergence between probability distributions is non-negative; clamp
    // rounding droop from the log-sum-exp.
    Ok(DivergenceValue::finite(bits.max(0.0)))
}

/// The exponential `d_alpha(P || Q) = 2^{D_alpha(P || Q)}`, always `>= 1`,
/// `+inf` when the divergence is infinite.
pub fn d_alpha(p: &Dist, q: &Dist, alpha: AlphaOrder) -> Result<f64> {
    Ok(renyi_divergence(p, q, alpha)?.linear())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dist, Support};
    use crate::rng::CounterRng;
    use std::sync::Arc;

    fn support(n: usize) -> Arc<Support> {
        Support::new((0..n).map(|i| format!("x{i}")).collect()).unwrap()
    }

    fn dist(s: &Arc<Support>, probs: &[f64]) -> Dist {
        Dist::new(Arc::clone(s), probs.to_vec()).unwrap()
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

    const ORDERS_GE_ONE: [AlphaOrder; 5] = [
        AlphaOrder::One,
        AlphaOrder::Finite(1.5),
        AlphaOrder::Finite(2.0),
        AlphaOrder::Finite(3.0),
        AlphaOrder::Infinity,
    ];

    #[test]
    fn alpha_order_parsing_and_validation() {
        assert_eq!("zero".parse::<AlphaOrder>().unwrap(), AlphaOrder::Zero);
        assert_eq!("one".parse::<AlphaOrder>().unwrap(), AlphaOrder::One);
        assert_eq!("1".parse::<AlphaOrder>().unwrap(), AlphaOrder::One);
        assert_eq!("0".parse::<AlphaOrder>().unwrap(), AlphaOrder::Zero);
        assert_eq!("inf".parse::<AlphaOrder>().unwrap(), AlphaOrder::Infinity);
        assert_eq!("2.5".parse::<AlphaOrder>().unwrap(), AlphaOrder::Finite(2.5));
        assert!("-1".parse::<AlphaOrder>().is_err());
        assert!("nan".parse::<AlphaOrder>().is_err());
        assert!(AlphaOrder::finite(1.0).is_err());
        assert!(AlphaOrder::finite(0.0).is_err());
        assert!(AlphaOrder::finite(f64::INFINITY).is_err());
        assert!(AlphaOrder::finite(0.5).is_ok());
    }

    #[test]
    fn entropy_of_uniform_is_log_cardinality() {
        let s = support(4);
        let u = dist(&s, &[0.25; 4]);
        for alpha in [AlphaOrder::Zero, AlphaOrder::One, AlphaOrder::Finite(2.0), AlphaOrder::Infinity]
        {
            let h = renyi_entropy(&u, alpha);
            assert!((h - 2.0).abs() < 1e-12, "H_{alpha} = {h}");
        }
    }

    #[test]
    fn entropy_of_point_mass_is_zero() {
        let s = support(3);
        let p = dist(&s, &[0.0, 1.0, 0.0]);
        for alpha in
            [AlphaOrder::Zero, AlphaOrder::One, AlphaOrder::Finite(0.5), AlphaOrder::Finite(2.0), AlphaOrder::Infinity]
        {
            assert_eq!(renyi_entropy(&p, alpha), 0.0);
        }
    }

    #[test]
    fn collision_entropy_hand_value() {
        // H_2([0.25, 0.75]) = -log2(0.0625 + 0.5625) = -log2(0.625).
        let s = support(2);
        let p = dist(&s, &[0.25, 0.75]);
        let h = renyi_entropy(&p, AlphaOrder::Finite(2.0));
        assert!((h - -(0.625f64.log2())).abs() < 1e-12);
        // Hartley entropy counts only charged points.
        let q = dist(&s, &[1.0, 0.0]);
        assert_eq!(renyi_entropy(&q, AlphaOrder::Zero), 0.0);
    }

    #[test]
    fn divergence_hand_values() {
        let s = support(2);
        let p = dist(&s, &[0.5, 0.5]);
        let q = dist(&s, &[0.25, 0.75]);

        let dinf = renyi_divergence(&p, &q, AlphaOrder::Infinity).unwrap();
        assert!(!dinf.is_infinite());
        assert!((dinf.bits() - 1.0).abs() < 1e-15);

        let d2 = renyi_divergence(&p, &q, AlphaOrder::Finite(2.0)).unwrap();
        assert!((d2.bits() - (4.0f64 / 3.0).log2()).abs() < 1e-12);
        assert!((d_alpha(&p, &q, AlphaOrder::Finite(2.0)).unwrap() - 4.0 / 3.0).abs() < 1e-12);

        let kl = renyi_divergence(&p, &q, AlphaOrder::One).unwrap();
        let expected = 0.5 * (2.0f64).log2() + 0.5 * (2.0f64 / 3.0).log2();
        assert!((kl.bits() - expected).abs() < 1e-12);
    }

    #[test]
    fn self_divergence_is_zero() {
        let s = support(3);
        let p = dist(&s, &[0.2, 0.3, 0.5]);
        for alpha in [AlphaOrder::One, AlphaOrder::Finite(2.0), AlphaOrder::Infinity] {
            let d = renyi_divergence(&p, &p, alpha).unwrap();
            assert!(!d.is_infinite());
            assert!(d.bits().abs() < 1e-12);
            assert!((d_alpha(&p, &p, alpha).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn absolute_continuity_failure_is_infinite_not_an_error() {
        let s = support(2);
        let p = dist(&s, &[0.5, 0.5]);
        let q = dist(&s, &[1.0, 0.0]);
        for alpha in ORDERS_GE_ONE {
            let d = renyi_divergence(&p, &q, alpha).unwrap();
            assert!(d.is_infinite());
            assert!(d.bits().is_infinite());
            assert_eq!(d_alpha(&p, &q, alpha).unwrap(), f64::INFINITY);
        }
        // P's support inside Q's stays finite even with zeros in P.
        let d = renyi_divergence(&q, &p, AlphaOrder::Finite(2.0)).unwrap();
        assert!(!d.is_infinite());
    }

    #[test]
    fn order_zero_divergence_is_rejected() {
        let s = support(2);
        let p = dist(&s, &[0.5, 0.5]);
        assert!(matches!(
            renyi_divergence(&p, &p, AlphaOrder::Zero),
            Err(Error::InvalidAlpha(_))
        ));
    }

    #[test]
    fn mismatched_supports_are_rejected() {
        let p = dist(&support(2), &[0.5, 0.5]);
        let q = dist(&support(3), &[0.4, 0.3, 0.3]);
        assert!(matches!(renyi_divergence(&p, &q, AlphaOrder::One), Err(Error::SupportMismatch)));
    }

    #[test]
    fn divergence_is_non_negative_on_random_pairs() {
        let mut rng = CounterRng::new(101, 0);
        for trial in 0..1000 {
            let n = 2 + (rng.next_u64() % 49) as usize;
            let s = support(n);
            let p = random_dist(&mut rng, &s, 0.0);
            let q = random_dist(&mut rng, &s, 0.0);
            let alpha = ORDERS_GE_ONE[trial % ORDERS_GE_ONE.len()];
            let d = renyi_divergence(&p, &q, alpha).unwrap();
            assert!(d.bits() >= 0.0, "negative divergence at trial {trial}");
            assert!(d_alpha(&p, &q, alpha).unwrap() >= 1.0);
        }
    }

    #[test]
    fn zero_divergence_identifies_equal_distributions() {
        let mut rng = CounterRng::new(102, 0);
        for trial in 0..500 {
            let n = 2 + (rng.next_u64() % 20) as usize;
            let s = support(n);
            let p = random_dist(&mut rng, &s, 0.01);
            let q = random_dist(&mut rng, &s, 0.01);
            let max_diff = p
                .probs()
                .iter()
                .zip(q.probs())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let alpha = ORDERS_GE_ONE[trial % ORDERS_GE_ONE.len()];
            let self_d = renyi_divergence(&p, &p, alpha).unwrap().bits();
            assert!(self_d <= 1e-12, "self divergence {self_d}");
            if max_diff > 1e-4 {
                let d = renyi_divergence(&p, &q, alpha).unwrap().bits();
                assert!(d > 1e-12, "distinct pair scored as equal, diff {max_diff}");
            }
        }
    }

    #[test]
    fn entropy_is_nonincreasing_in_the_order() {
        let orders = [
            AlphaOrder::Zero,
            AlphaOrder::Finite(0.5),
            AlphaOrder::One,
            AlphaOrder::Finite(2.0),
            AlphaOrder::Finite(5.0),
            AlphaOrder::Infinity,
        ];
        let mut rng = CounterRng::new(103, 0);
        for _ in 0..300 {
            let n = 2 + (rng.next_u64() % 20) as usize;
            let s = support(n);
            let p = random_dist(&mut rng, &s, 0.0);
            let hs: Vec<f64> = orders.iter().map(|&a| renyi_entropy(&p, a)).collect();
            for w in hs.windows(2) {
                assert!(w[0] >= w[1] - 1e-10, "entropy increased along orders: {hs:?}");
            }
        }
    }

    #[test]
    fn divergence_is_nondecreasing_in_the_order() {
        let mut rng = CounterRng::new(104, 0);
        for _ in 0..300 {
            let n = 2 + (rng.next_u64() % 20) as usize;
            let s = support(n);
            let p = random_dist(&mut rng, &s, 0.02);
            let q = random_dist(&mut rng, &s, 0.02);
            let ds: Vec<f64> = ORDERS_GE_ONE
                .iter()
                .map(|&a| renyi_divergence(&p, &q, a).unwrap().bits())
                .collect();
            for w in ds.windows(2) {
                assert!(w[0] <= w[1] + 1e-10, "divergence decreased along orders: {ds:?}");
            }
        }
    }

    #[test]
    fn finite_orders_approach_their_limits() {
        let mut rng = CounterRng::new(105, 0);
        for _ in 0..100 {
            let n = 2 + (rng.next_u64() % 20) as usize;
            let s = support(n);
            let p = random_dist(&mut rng, &s, 0.5);
            let q = random_dist(&mut rng, &s, 0.5);

            let kl = renyi_divergence(&p, &q, AlphaOrder::One).unwrap().bits();
            for a in [1.0 - 1e-4, 1.0 + 1e-4] {
                let near = renyi_divergence(&p, &q, AlphaOrder::finite(a).unwrap()).unwrap().bits();
                assert!((near - kl).abs() <= 1e-3, "KL limit: {near} vs {kl}");
            }

            let dinf = renyi_divergence(&p, &q, AlphaOrder::Infinity).unwrap().bits();
            let large =
                renyi_divergence(&p, &q, AlphaOrder::finite(1e4).unwrap()).unwrap().bits();
            assert!((large - dinf).abs() <= 1e-3, "sup limit: {large} vs {dinf}");
        }
    }

    #[test]
    fn huge_orders_do_not_overflow() {
        let s = support(3);
        let p = dist(&s, &[0.6, 0.3, 0.1]);
        let q = dist(&s, &[0.1, 0.3, 0.6]);
        let d = renyi_divergence(&p, &q, AlphaOrder::finite(1e8).unwrap()).unwrap();
        assert!(d.bits().is_finite());
        let h = renyi_entropy(&p, AlphaOrder::Finite(1e8));
        assert!(h.is_finite() && h >= 0.0);
    }
}
