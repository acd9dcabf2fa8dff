//! Finite supports, distributions, simplex weights, tabulated hypotheses,
//! and bounded loss functions.
//!
//! Everything downstream (divergences, combiners, solvers, bound checks)
//! works over one shared [`Support`]: an ordered list of opaque point ids,
//! optionally carrying a real coordinate vector per point for experiments
//! that train on features. Distributions and hypotheses are dense tables
//! indexed by support position.

use std::collections::HashSet;
use std::sync::Arc;

use crate::{Error, Result};

/// Probability tables must sum to 1 within this tolerance.
pub const DIST_TOL: f64 = 1e-9;
/// Mixture weights must sum to 1 within this tolerance.
pub const WEIGHT_TOL: f64 = 1e-12;

/// An ordered finite set of points, each with a unique string id and an
/// optional coordinate vector (used by experiments that fit on features).
#[derive(Debug, Clone, PartialEq)]
pub struct Support {
    points: Vec<String>,
    coords: Option<Vec<Vec<f64>>>,
}

impl Support {
    /// Builds a support from unique ids. Fails on empty input or duplicates.
    pub fn new(points: Vec<String>) -> Result<Arc<Self>> {
        Self::with_coords_opt(points, None)
    }

    /// Builds a support whose points carry coordinate vectors of equal
    /// dimension.
    pub fn with_coords(points: Vec<String>, coords: Vec<Vec<f64>>) -> Result<Arc<Self>> {
        Self::with_coords_opt(points, Some(coords))
    }

    fn with_coords_opt(points: Vec<String>, coords: Option<Vec<Vec<f64>>>) -> Result<Arc<Self>> {
        if points.is_empty() {
            return Err(Error::Empty("support"));
        }
        let mut seen = HashSet::with_capacity(points.len());
        for id in &points {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicatePoint(id.clone()));
            }
        }
        if let Some(c) = &coords {
            if c.len() != points.len() {
                return Err(Error::LengthMismatch { expected: points.len(), got: c.len() });
            }
            let dim = c[0].len();
            for (i, v) in c.iter().enumerate() {
                if v.len() != dim {
                    return Err(Error::LengthMismatch { expected: dim, got: v.len() });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "coords[{i}] contains a non-finite component"
                    )));
                }
            }
        }
        Ok(Arc::new(Support { points, coords }))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.points
    }

    pub fn id(&self, index: usize) -> &str {
        &self.points[index]
    }

    pub fn coords(&self) -> Option<&[Vec<f64>]> {
        self.coords.as_deref()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.points.iter().position(|p| p == id)
    }
}

/// True when both handles name the same support, by pointer or by content.
pub fn same_support(a: &Arc<Support>, b: &Arc<Support>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

fn ensure_same_support(a: &Arc<Support>, b: &Arc<Support>) -> Result<()> {
    if same_support(a, b) {
        Ok(())
    } else {
        Err(Error::SupportMismatch)
    }
}

/// A probability distribution as a dense table over a [`Support`].
///
/// Entries are finite, non-negative, and sum to 1 within [`DIST_TOL`].
/// Zero entries are meaningful: absolute continuity failures show up as
/// infinite divergences, never as errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dist {
    support: Arc<Support>,
    probs: Vec<f64>,
}

impl Dist {
    pub fn new(support: Arc<Support>, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != support.len() {
            return Err(Error::LengthMismatch { expected: support.len(), got: probs.len() });
        }
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidProbability { index, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > DIST_TOL {
            return Err(Error::NotNormalized { sum, tol: DIST_TOL });
        }
        Ok(Dist { support, probs })
    }

    pub fn support(&self) -> &Arc<Support> {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Probability mass of the points where `predicate` holds.
    pub fn mass_where(&self, mut predicate: impl FnMut(usize) -> bool) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|(i, _)| predicate(*i))
            .map(|(_, p)| p)
            .sum()
    }
}

/// The uniform distribution over `support`.
pub fn uniform_dist(support: &Arc<Support>) -> Dist {
    let n = support.len();
    Dist { support: Arc::clone(support), probs: vec![1.0 / n as f64; n] }
}

/// A point on the probability simplex, used for mixture and combiner weights.
///
/// Entries are finite, non-negative, and sum to 1 within [`WEIGHT_TOL`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexWeights {
    weights: Vec<f64>,
}

impl SimplexWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("weights"));
        }
        for (index, &value) in weights.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidProbability { index, value });
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::NotNormalized { sum, tol: WEIGHT_TOL });
        }
        Ok(SimplexWeights { weights })
    }

    /// Uniform weights `(1/k, ..., 1/k)`.
    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Empty("weights"));
        }
        Ok(SimplexWeights { weights: vec![1.0 / k as f64; k] })
    }

    /// The `i`-th vertex of the simplex.
    pub fn vertex(k: usize, i: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Empty("weights"));
        }
        if i >= k {
            return Err(Error::InvalidParameter(format!("vertex index {i} out of range for k={k}")));
        }
        let mut weights = vec![0.0; k];
        weights[i] = 1.0;
        Ok(SimplexWeights { weights })
    }

    /// Normalizes a non-negative, not-all-zero vector onto the simplex.
    pub fn normalized(raw: &[f64]) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Empty("weights"));
        }
        for (index, &value) in raw.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidProbability { index, value });
            }
        }
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidParameter("weights sum to zero".into()));
        }
        Ok(SimplexWeights { weights: raw.iter().map(|w| w / sum).collect() })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// A hypothesis (or target function) tabulated over a support, with values
/// in `[0, range_bound]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    support: Arc<Support>,
    values: Vec<f64>,
    range_bound: f64,
}

impl Hypothesis {
    pub fn new(support: Arc<Support>, values: Vec<f64>, range_bound: f64) -> Result<Self> {
        if !(range_bound.is_finite() && range_bound > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "range_bound must be a positive finite number, got {range_bound}"
            )));
        }
        if values.len() != support.len() {
            return Err(Error::LengthMismatch { expected: support.len(), got: values.len() });
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() || value < 0.0 || value > range_bound {
                return Err(Error::ValueOutOfRange { index, value, bound: range_bound });
            }
        }
        Ok(Hypothesis { support, values, range_bound })
    }

    pub fn support(&self) -> &Arc<Support> {
        &self.support
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn range_bound(&self) -> f64 {
        self.range_bound
    }

    /// True when every value is exactly 0 or 1.
    pub fn is_boolean(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }
}

/// Loss function kinds supported by the bound machinery.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `|x - y|`.
    Absolute,
    /// `1[x != y]` on Boolean tables only.
    ZeroOne,
    /// `(x - y)^2`.
    Squared,
}

/// A loss kind together with the capabilities the bounds rely on: the uniform
/// bound `M` on the loss, convexity in the first argument, and the factor
/// `beta >= 1` in the relaxed triangle inequality
/// `L(x, z) <= beta * (L(x, y) + L(y, z))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    kind: LossKind,
    bound_m: f64,
    convex: bool,
    beta: f64,
}

impl LossSpec {
    /// Absolute loss on values in `[0, range_bound]`: `M = range_bound`,
    /// convex, exact triangle inequality.
    pub fn absolute(range_bound: f64) -> Result<Self> {
        ensure_positive_bound(range_bound)?;
        Ok(LossSpec { kind: LossKind::Absolute, bound_m: range_bound, convex: true, beta: 1.0 })
    }

    /// Squared loss on values in `[0, range_bound]`: `M = range_bound^2`,
    /// convex, triangle inequality with `beta = 2`.
    pub fn squared(range_bound: f64) -> Result<Self> {
        ensure_positive_bound(range_bound)?;
        Ok(LossSpec {
            kind: LossKind::Squared,
            bound_m: range_bound * range_bound,
            convex: true,
            beta: 2.0,
        })
    }

    /// Zero-one loss on Boolean tables: `M = 1`. Not convex over the reals,
    /// so solvers and convexity-based bounds reject it; combined real-valued
    /// rules should be scored with [`LossSpec::absolute`] or
    /// [`LossSpec::squared`] instead.
    pub fn zero_one() -> Self {
        LossSpec { kind: LossKind::ZeroOne, bound_m: 1.0, convex: false, beta: 1.0 }
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    /// Uniform upper bound `M` on the pointwise loss.
    pub fn bound_m(&self) -> f64 {
        self.bound_m
    }

    /// Whether `x -> L(x, y)` is convex, as required by mixture arguments.
    pub fn is_convex(&self) -> bool {
        self.convex
    }

    /// Relaxed triangle-inequality factor (`1` exact, `2` for squared loss).
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Pointwise loss `L(x, y)`.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        match self.kind {
            LossKind::Absolute => Ok((x - y).abs()),
            LossKind::Squared => Ok((x - y) * (x - y)),
            LossKind::ZeroOne => {
                ensure_boolean(x)?;
                ensure_boolean(y)?;
                Ok(if x == y { 0.0 } else { 1.0 })
            }
        }
    }

    /// A subgradient of `x -> L(x, y)`; errors for the zero-one loss.
    pub fn grad_first(&self, x: f64, y: f64) -> Result<f64> {
        match self.kind {
            LossKind::Absolute => Ok((x - y).signum() * f64::from((x - y) != 0.0)),
            LossKind::Squared => Ok(2.0 * (x - y)),
            LossKind::ZeroOne => {
                Err(Error::InvalidParameter("zero-one loss has no usable subgradient".into()))
            }
        }
    }

    /// Checks that `bound_m` really dominates the loss over tables bounded by
    /// `range_bound`.
    fn ensure_covers(&self, range_bound: f64) -> Result<()> {
        let needed = match self.kind {
            LossKind::Absolute => range_bound,
            LossKind::Squared => range_bound * range_bound,
            LossKind::ZeroOne => 1.0,
        };
        if self.bound_m + 1e-12 < needed {
            return Err(Error::InvalidParameter(format!(
                "loss bound M = {} does not cover tables with range_bound = {range_bound}",
                self.bound_m
            )));
        }
        Ok(())
    }
}

fn ensure_positive_bound(b: f64) -> Result<()> {
    if b.is_finite() && b > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("range bound must be positive and finite, got {b}")))
    }
}

fn ensure_boolean(v: f64) -> Result<()> {
    if v == 0.0 || v == 1.0 {
        Ok(())
    } else {
        Err(Error::NonBoolean { index: usize::MAX, value: v })
    }
}

fn ensure_triple(p: &Dist, h: &Hypothesis, f: &Hypothesis, loss: &LossSpec) -> Result<()> {
    ensure_same_support(p.support(), h.support())?;
    ensure_same_support(p.support(), f.support())?;
    loss.ensure_covers(h.range_bound().max(f.range_bound()))
}

/// Expected loss `L_P(h, f) = E_{x ~ P}[L(h(x), f(x))]`.
///
/// Zero-one loss additionally requires both tables to be Boolean at every
/// point of the support, not just the charged ones.
pub fn expected_loss(p: &Dist, h: &Hypothesis, f: &Hypothesis, loss: &LossSpec) -> Result<f64> {
    ensure_triple(p, h, f, loss)?;
    let mut total = 0.0;
    for (i, &mass) in p.probs().iter().enumerate() {
        let l = loss.eval(h.values()[i], f.values()[i]).map_err(|e| at_index(e, i))?;
        total += mass * l;
    }
    Ok(total)
}

/// Expected powered loss `E_{x ~ P}[L(h(x), f(x))^exponent]` for
/// `exponent >= 1`, as used by the tight form of the Holder bound.
pub fn expected_power_loss(
    p: &Dist,
    h: &Hypothesis,
    f: &Hypothesis,
    loss: &LossSpec,
    exponent: f64,
) -> Result<f64> {
    if !(exponent.is_finite() && exponent >= 1.0) {
        return Err(Error::InvalidParameter(format!("exponent must be >= 1, got {exponent}")));
    }
    ensure_triple(p, h, f, loss)?;
    let mut total = 0.0;
    for (i, &mass) in p.probs().iter().enumerate() {
        let l = loss.eval(h.values()[i], f.values()[i]).map_err(|e| at_index(e, i))?;
        total += mass * l.powf(exponent);
    }
    Ok(total)
}

fn at_index(e: Error, i: usize) -> Error {
    match e {
        Error::NonBoolean { value, .. } => Error::NonBoolean { index: i, value },
        other => other,
    }
}

/// The mixture `sum_i weights_i * sources_i` as a new distribution.
///
/// The result is an exact convex combination per point; its total mass is 1
/// up to rounding drift, never renormalized.
pub fn mixture(sources: &[Dist], weights: &SimplexWeights) -> Result<Dist> {
    if sources.is_empty() {
        return Err(Error::Empty("sources"));
    }
    if sources.len() != weights.len() {
        return Err(Error::LengthMismatch { expected: sources.len(), got: weights.len() });
    }
    let support = sources[0].support();
    for q in &sources[1..] {
        ensure_same_support(support, q.support())?;
    }
    let mut probs = vec![0.0; support.len()];
    for (q, &w) in sources.iter().zip(weights.as_slice()) {
        for (slot, &p) in probs.iter_mut().zip(q.probs()) {
            *slot += w * p;
        }
    }
    Dist::new(Arc::clone(support), probs)
}
