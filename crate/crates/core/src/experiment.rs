//! Reproducible synthetic experiment on a discretized Gaussian-mixture task.
//!
//! Two overlapping sources are built from a four-Gaussian mixture on a square
//! grid: each source sees three of the four components, the target sees all
//! four. Per-source regressors are trained on labeled samples, swept through
//! every distribution-weighted combination `λ h₁ + (1-λ) h₂`, and the sweep
//! records, per λ,
//!
//! ```text
//!   mse(λ)   test-sample mean squared error of the combined rule
//!   D₂(λ)    Rényi divergence (bits) of the target from λQ₁ + (1-λ)Q₂
//!   bound(λ) the divergence-weighted guarantee (d_α(P ‖ Q_λ) ε)^γ M^{1/α}
//! ```
//!
//! so that the agreement between the error curve and the divergence curve can
//! be read off directly (rank correlation, argmin gap).
//!
//! Everything is driven by counter-based substreams of a single seed: results
//! are bit-identical across runs and across thread counts.

use std::sync::Arc;

use rayon::prelude::*;

use crate::bounds::{thm16_verify, thm17_verify, BoundReport};
use crate::combine::combine_distribution_weighted;
use crate::divergence::{renyi_divergence, AlphaOrder};
use crate::model::{expected_loss, mixture, Dist, Hypothesis, LossSpec, SimplexWeights, Support};
use crate::rng::CounterRng;
use crate::{Error, Result};

/// Substream reserved for drawing the training sample of source `i`
/// (`TRAIN_STREAM_BASE + i`). Kept far away from small stream indices so
/// ad-hoc callers of [`sample_dist`] do not collide with the experiment.
const TRAIN_STREAM_BASE: u64 = 1 << 32;

/// Substream reserved for the shared test sample drawn from the target.
const TEST_STREAM: u64 = 1 << 33;

/// Substream base for the per-source label-drift draws of the
/// multiple-function variant (`LABEL_STREAM_BASE + i`).
const LABEL_STREAM_BASE: u64 = (1 << 33) + 1_000;

/// Ridge added to the normal equations of the least-squares trainer.
const RIDGE: f64 = 1e-8;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Full description of one experiment run.
///
/// The grid covers `[-grid_extent, grid_extent]²` with `grid_cells` cells per
/// axis; distributions live on the cell centers. With an even cell count no
/// center falls on a coordinate axis, so the quadrant label below is always
/// unambiguous.
#[derive(Debug, Clone)]
pub struct GaussianGridConfig {
    /// Means of the four generating Gaussian components.
    pub centers: [[f64; 2]; 4],
    /// Shared isotropic variance of every component.
    pub variance: f64,
    /// Half-width of the square grid.
    pub grid_extent: f64,
    /// Cells per axis; the support has `grid_cells²` points.
    pub grid_cells: usize,
    /// Training draws per source.
    pub n_train: usize,
    /// Test draws from the target.
    pub n_test: usize,
    /// Master seed; all randomness is derived from it via substreams.
    pub seed: u64,
    /// Number of evenly spaced λ values in `[0, 1]`, endpoints included.
    pub lambda_steps: usize,
    /// Divergence order for the divergence and bound columns.
    pub alpha: f64,
}

impl Default for GaussianGridConfig {
    fn default() -> Self {
        GaussianGridConfig {
            centers: [[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]],
            variance: 1.0,
            grid_extent: 4.0,
            grid_cells: 64,
            n_train: 5_000,
            n_test: 5_000,
            seed: 7,
            lambda_steps: 101,
            alpha: 2.0,
        }
    }
}

impl GaussianGridConfig {
    /// Checks the structural invariants of the configuration.
    pub fn validate(&self) -> Result<()> {
        if self.grid_cells < 8 {
            return Err(Error::InvalidParameter(format!(
                "grid_cells must be at least 8, got {}",
                self.grid_cells
            )));
        }
        if self.lambda_steps < 3 {
            return Err(Error::InvalidParameter(format!(
                "lambda_steps must be at least 3, got {}",
                self.lambda_steps
            )));
        }
        if !(self.variance.is_finite() && self.variance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "variance must be a positive finite number, got {}",
                self.variance
            )));
        }
        if !(self.grid_extent.is_finite() && self.grid_extent > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid_extent must be a positive finite number, got {}",
                self.grid_extent
            )));
        }
        if self.n_train < 3 {
            return Err(Error::InvalidParameter(format!(
                "n_train must be at least 3 to fit a regressor, got {}",
                self.n_train
            )));
        }
        if self.n_test == 0 {
            return Err(Error::InvalidParameter(
                "n_test must be at least 1".into(),
            ));
        }
        if !(self.alpha.is_finite() && self.alpha > 1.0) || self.alpha.is_nan() {
            return Err(Error::InvalidAlpha(format!(
                "experiment orders must be finite and exceed 1, got {}",
                self.alpha
            )));
        }
        for (i, c) in self.centers.iter().enumerate() {
            if !(c[0].is_finite() && c[1].is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "center {i} has a non-finite coordinate"
                )));
            }
        }
        Ok(())
    }
}

/// One λ of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentRow {
    pub lambda: f64,
    pub mse: f64,
    pub divergence_bits: f64,
    pub thm2_bound: f64,
}

/// Sweep output plus the scalar summaries read off it.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    /// Rows in ascending λ.
    pub rows: Vec<ExperimentRow>,
    /// λ minimizing the test mean squared error.
    pub argmin_mse: f64,
    /// λ minimizing the divergence column.
    pub argmin_div: f64,
    /// Spearman rank correlation between the error and divergence columns.
    pub rank_correlation: f64,
}

// ---------------------------------------------------------------------------
// Grid construction and discretization
// ---------------------------------------------------------------------------

/// Builds the cell-center support of the experiment grid.
///
/// Point `c{ix}_{iy}` sits at
/// `(-extent + (ix + ½)·w, -extent + (iy + ½)·w)` with `w = 2·extent/cells`,
/// laid out row-major (`iy · cells + ix`).
pub fn grid_support(cfg: &GaussianGridConfig) -> Result<Arc<Support>> {
    cfg.validate()?;
    let c = cfg.grid_cells;
    let width = 2.0 * cfg.grid_extent / c as f64;
    let mut ids = Vec::with_capacity(c * c);
    let mut coords = Vec::with_capacity(c * c);
    for iy in 0..c {
        let y = -cfg.grid_extent + (iy as f64 + 0.5) * width;
        for ix in 0..c {
            let x = -cfg.grid_extent + (ix as f64 + 0.5) * width;
            if c % 2 == 0 {
                // Centers sit at extent·(2i+1-c)/c; with even c the numerator
                // is odd, so a center on an axis is arithmetically impossible.
                assert!(
                    x.abs() > 1e-12 && y.abs() > 1e-12,
                    "even grid placed a cell center on a coordinate axis"
                );
            }
            ids.push(format!("c{ix}_{iy}"));
            coords.push(vec![x, y]);
        }
    }
    Support::with_coords(ids, coords)
}

/// Restriction of an isotropic Gaussian mixture to the cell centers of the
/// grid, renormalized to a distribution.
///
/// `components` pairs each mean with its mixture weight; the weights must lie
/// on the simplex.
pub fn discretize_gaussian_mixture(
    components: &[([f64; 2], f64)],
    cfg: &GaussianGridConfig,
) -> Result<Dist> {
    let support = grid_support(cfg)?;
    discretize_on(&support, components, cfg.variance)
}

fn discretize_on(
    support: &Arc<Support>,
    components: &[([f64; 2], f64)],
    variance: f64,
) -> Result<Dist> {
    if components.is_empty() {
        return Err(Error::Empty("mixture components"));
    }
    for (i, &(_, w)) in components.iter().enumerate() {
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::InvalidProbability { index: i, value: w });
        }
    }
    let sum: f64 = components.iter().map(|&(_, w)| w).sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalized { sum, tol: 1e-9 });
    }
    let coords = support
        .coords()
        .ok_or_else(|| Error::InvalidParameter("support carries no coordinates".into()))?;
    let inv = 1.0 / (2.0 * variance);
    let mut probs: Vec<f64> = coords
        .iter()
        .map(|xy| {
            components
                .iter()
                .map(|&([cx, cy], w)| {
                    let dx = xy[0] - cx;
                    let dy = xy[1] - cy;
                    w * (-(dx * dx + dy * dy) * inv).exp()
                })
                .sum()
        })
        .collect();
    let total: f64 = probs.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::Infeasible(
            "the grid captures no mass of the mixture".into(),
        ));
    }
    for p in &mut probs {
        *p /= total;
    }
    Dist::new(Arc::clone(support), probs)
}

// ---------------------------------------------------------------------------
// Sampling, estimation, training
// ---------------------------------------------------------------------------

/// Draws `n` independent points from `d` by inverse-CDF lookup, returned as
/// support indices (ids are recoverable via `d.support().id(i)`).
///
/// The `(seed, stream)` pair keys a counter-based generator, so parallel
/// callers with distinct streams consume disjoint randomness and the result
/// never depends on scheduling.
pub fn sample_dist(d: &Dist, n: usize, seed: u64, stream: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample count must be at least 1".into()));
    }
    let mut cdf = Vec::with_capacity(d.len());
    let mut acc = 0.0;
    for &p in d.probs() {
        acc += p;
        cdf.push(acc);
    }
    let mut rng = CounterRng::new(seed, stream);
    Ok((0..n)
        .map(|_| {
            // Scale by the accumulated total so rounding drift in the final
            // partial sum cannot bias the last point.
            let u = rng.uniform() * acc;
            cdf.partition_point(|&c| c <= u).min(d.len() - 1)
        })
        .collect())
}

/// Add-`smoothing` frequency estimate over the full support:
///
/// ```text
///   probs[x] = (count[x] + smoothing) / (n + smoothing · |support|)
/// ```
///
/// With `smoothing > 0` the estimate has full support, which keeps
/// divergences from the estimate finite.
pub fn empirical_dist(samples: &[usize], support: &Arc<Support>, smoothing: f64) -> Result<Dist> {
    if samples.is_empty() {
        return Err(Error::Empty("samples"));
    }
    if !(smoothing.is_finite() && smoothing >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "smoothing must be a finite non-negative number, got {smoothing}"
        )));
    }
    let n = support.len();
    let mut counts = vec![0u64; n];
    for (i, &s) in samples.iter().enumerate() {
        if s >= n {
            return Err(Error::MalformedInput {
                context: "samples".into(),
                msg: format!("sample {i} references point {s} outside the {n}-point support"),
            });
        }
        counts[s] += 1;
    }
    let denom = samples.len() as f64 + smoothing * n as f64;
    let probs = counts
        .iter()
        .map(|&c| (c as f64 + smoothing) / denom)
        .collect();
    Dist::new(Arc::clone(support), probs)
}

/// Ridge least-squares regressor on the support coordinates plus intercept,
/// tabulated over the whole support and clamped to the label range.
///
/// Labels must be finite and non-negative; the hypothesis range bound is
/// `max(1, max label)`. At least three samples are required.
pub fn train_least_squares(
    samples: &[usize],
    labels: &[f64],
    support: &Arc<Support>,
) -> Result<Hypothesis> {
    if samples.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "least squares needs at least 3 samples, got {}",
            samples.len()
        )));
    }
    if labels.len() != samples.len() {
        return Err(Error::LengthMismatch {
            expected: samples.len(),
            got: labels.len(),
        });
    }
    let coords = support
        .coords()
        .ok_or_else(|| Error::InvalidParameter("support carries no coordinates".into()))?;
    let n = support.len();
    let dim = coords[0].len();
    let mut range = 1.0f64;
    for (i, &y) in labels.iter().enumerate() {
        if !(y.is_finite() && y >= 0.0) {
            return Err(Error::ValueOutOfRange {
                index: i,
                value: y,
                bound: f64::INFINITY,
            });
        }
        range = range.max(y);
    }
    // Normal equations over the features (x₁, …, x_d, 1).
    let d1 = dim + 1;
    let mut a = vec![vec![0.0f64; d1]; d1];
    let mut b = vec![0.0f64; d1];
    for (idx, (&s, &y)) in samples.iter().zip(labels).enumerate() {
        if s >= n {
            return Err(Error::MalformedInput {
                context: "samples".into(),
                msg: format!("sample {idx} references point {s} outside the {n}-point support"),
            });
        }
        let feat = |j: usize| if j < dim { coords[s][j] } else { 1.0 };
        for r in 0..d1 {
            b[r] += feat(r) * y;
            for c in 0..d1 {
                a[r][c] += feat(r) * feat(c);
            }
        }
    }
    for (r, row) in a.iter_mut().enumerate() {
        row[r] += RIDGE;
    }
    let w = solve_linear(a, b)?;
    let values = (0..n)
        .map(|x| {
            let mut v = w[dim];
            for j in 0..dim {
                v += w[j] * coords[x][j];
            }
            v.clamp(0.0, range)
        })
        .collect();
    Hypothesis::new(Arc::clone(support), values, range)
}

/// Gaussian elimination with partial pivoting; the ridge term keeps the
/// system comfortably regular.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("pivot range is never empty");
        if a[piv][col].abs() < 1e-300 {
            return Err(Error::Infeasible("singular normal equations".into()));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0f64; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for c in row + 1..n {
            acc -= a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// The experiment
// ---------------------------------------------------------------------------

/// The fixed cast of one run: target, the two three-component sources, and
/// the quadrant labeling function.
struct World {
    support: Arc<Support>,
    p: Dist,
    sources: Vec<Dist>,
    f: Hypothesis,
}

fn build_world(cfg: &GaussianGridConfig) -> Result<World> {
    let support = grid_support(cfg)?;
    let [g1, g2, g3, g4] = cfg.centers;
    let third = 1.0 / 3.0;
    // Source 1 misses the fourth component, source 2 the second; they share
    // two components, so neither is a reweighting of the other.
    let q1 = discretize_on(&support, &[(g1, third), (g2, third), (g3, third)], cfg.variance)?;
    let q2 = discretize_on(&support, &[(g1, third), (g3, third), (g4, third)], cfg.variance)?;
    let p = discretize_on(
        &support,
        &[(g1, 0.25), (g2, 0.25), (g3, 0.25), (g4, 0.25)],
        cfg.variance,
    )?;
    let coords = support.coords().expect("grid support always has coordinates");
    let labels = coords
        .iter()
        .map(|xy| if xy[0] * xy[1] > 0.0 { 1.0 } else { 0.0 })
        .collect();
    let f = Hypothesis::new(Arc::clone(&support), labels, 1.0)?;
    Ok(World {
        support,
        p,
        sources: vec![q1, q2],
        f,
    })
}

/// Samples source `i` and fits the ridge regressor against `labeler`.
fn train_source_hypothesis(
    world: &World,
    cfg: &GaussianGridConfig,
    i: usize,
    labeler: &Hypothesis,
) -> Result<Hypothesis> {
    let samples = sample_dist(
        &world.sources[i],
        cfg.n_train,
        cfg.seed,
        TRAIN_STREAM_BASE + i as u64,
    )?;
    let labels: Vec<f64> = samples.iter().map(|&s| labeler.values()[s]).collect();
    train_least_squares(&samples, &labels, &world.support)
}

/// Runs the full sweep described in the module docs.
///
/// Weights are `(λ, 1-λ)`, so `λ = 1` reproduces the first source's
/// hypothesis and `λ = 0` the second's. Rows are computed in parallel; each
/// row is a pure function of the shared training artifacts, so the output is
/// independent of the thread count.
pub fn run_gaussian_experiment(cfg: &GaussianGridConfig) -> Result<ExperimentResult> {
    let world = build_world(cfg)?;
    let order = AlphaOrder::from_real(cfg.alpha)?;
    let h1 = train_source_hypothesis(&world, cfg, 0, &world.f)?;
    let h2 = train_source_hypothesis(&world, cfg, 1, &world.f)?;
    let hyps = vec![h1, h2];
    let test = sample_dist(&world.p, cfg.n_test, cfg.seed, TEST_STREAM)?;
    let loss = LossSpec::squared(1.0)?;
    let mut eps = 0.0f64;
    for (q, h) in world.sources.iter().zip(&hyps) {
        eps = eps.max(expected_loss(q, h, &world.f, &loss)?);
    }
    let steps = cfg.lambda_steps;
    let rows = (0..steps)
        .into_par_iter()
        .map(|i| {
            let lambda = i as f64 / (steps - 1) as f64;
            let weights = SimplexWeights::new(vec![lambda, 1.0 - lambda])?;
            let combined = combine_distribution_weighted(&world.sources, &hyps, &weights)?;
            let mse = test
                .iter()
                .map(|&x| {
                    let d = combined.values()[x] - world.f.values()[x];
                    d * d
                })
                .sum::<f64>()
                / test.len() as f64;
            let q_lambda = mixture(&world.sources, &weights)?;
            let div = renyi_divergence(&world.p, &q_lambda, order)?;
            let thm2_bound = if div.is_infinite() {
                f64::INFINITY
            } else {
                (div.linear() * eps).powf(order.gamma()) * order.m_root(loss.bound_m())
            };
            Ok(ExperimentRow {
                lambda,
                mse,
                divergence_bits: div.bits(),
                thm2_bound,
            })
        })
        .collect::<Result<Vec<ExperimentRow>>>()?;
    let argmin_mse = argmin_lambda(&rows, |r| r.mse);
    let argmin_div = argmin_lambda(&rows, |r| r.divergence_bits);
    let mses: Vec<f64> = rows.iter().map(|r| r.mse).collect();
    let divs: Vec<f64> = rows.iter().map(|r| r.divergence_bits).collect();
    let rank_correlation = spearman(&mses, &divs);
    Ok(ExperimentResult {
        rows,
        argmin_mse,
        argmin_div,
        rank_correlation,
    })
}

/// Variant where each source labels its own data with a drifted copy of the
/// target function, then both multiple-function guarantees are checked at
/// every λ of the sweep (absolute loss for the `β = 1` form, squared loss
/// for the smooth form). Returns every report; all of them should hold.
pub fn run_multi_function_experiment(
    cfg: &GaussianGridConfig,
    perturbation: f64,
) -> Result<Vec<BoundReport>> {
    if !(perturbation.is_finite() && (0.0..0.5).contains(&perturbation)) {
        return Err(Error::InvalidParameter(format!(
            "perturbation must lie in [0, 0.5), got {perturbation}"
        )));
    }
    let world = build_world(cfg)?;
    let order = AlphaOrder::from_real(cfg.alpha)?;
    let k = world.sources.len();
    let source_fs = (0..k)
        .map(|i| {
            drifted_labels(
                &world.p,
                &world.f,
                perturbation,
                cfg.seed,
                LABEL_STREAM_BASE + i as u64,
            )
        })
        .collect::<Result<Vec<Hypothesis>>>()?;
    let hyps = (0..k)
        .map(|i| train_source_hypothesis(&world, cfg, i, &source_fs[i]))
        .collect::<Result<Vec<Hypothesis>>>()?;
    let abs_loss = LossSpec::absolute(1.0)?;
    let sq_loss = LossSpec::squared(1.0)?;
    let steps = cfg.lambda_steps;
    let nested = (0..steps)
        .into_par_iter()
        .map(|i| {
            let lambda = i as f64 / (steps - 1) as f64;
            let weights = SimplexWeights::new(vec![lambda, 1.0 - lambda])?;
            let triangle = thm16_verify(
                &world.p,
                &world.sources,
                &hyps,
                &source_fs,
                &world.f,
                &abs_loss,
                &weights,
                order,
            )?;
            let smooth = thm17_verify(
                &world.p,
                &world.sources,
                &hyps,
                &source_fs,
                &world.f,
                &sq_loss,
                &weights,
                order,
            )?;
            Ok(vec![triangle, smooth])
        })
        .collect::<Result<Vec<Vec<BoundReport>>>>()?;
    Ok(nested.into_iter().flatten().collect())
}

/// Label function for one source: `f` with deterministic inversions on the
/// cheapest decile of cells under the target and Bernoulli(`perturbation`)
/// flips on the most expensive decile.
///
/// Every flip is charged against a running target-mass budget of
/// `perturbation`, so the drift satisfies `L_P(f_i, f) ≤ perturbation · M`
/// surely — not merely in expectation — under any loss that charges at most
/// `M = 1` per disagreeing cell.
fn drifted_labels(
    p: &Dist,
    f: &Hypothesis,
    perturbation: f64,
    seed: u64,
    stream: u64,
) -> Result<Hypothesis> {
    if perturbation == 0.0 {
        return Ok(f.clone());
    }
    let n = p.len();
    let mut by_mass: Vec<usize> = (0..n).collect();
    by_mass.sort_by(|&a, &b| p.probs()[a].total_cmp(&p.probs()[b]).then(a.cmp(&b)));
    let decile = (n / 10).max(1);
    let budget = perturbation * f.range_bound();
    let mut values = f.values().to_vec();
    let mut spent = 0.0f64;
    for &x in by_mass.iter().take(decile) {
        let cost = p.probs()[x];
        if spent + cost <= budget {
            values[x] = 1.0 - values[x];
            spent += cost;
        }
    }
    // One draw per candidate regardless of the budget state keeps the stream
    // consumption, and hence the output, independent of earlier decisions.
    let mut rng = CounterRng::new(seed, stream);
    for &x in by_mass.iter().rev().take(decile) {
        let flip = rng.uniform() < perturbation;
        let cost = p.probs()[x];
        if flip && spent + cost <= budget {
            values[x] = 1.0 - values[x];
            spent += cost;
        }
    }
    Hypothesis::new(Arc::clone(f.support()), values, f.range_bound())
}

// ---------------------------------------------------------------------------
// Summaries and serialization
// ---------------------------------------------------------------------------

fn argmin_lambda(rows: &[ExperimentRow], key: impl Fn(&ExperimentRow) -> f64) -> f64 {
    let mut best = 0usize;
    for (i, r) in rows.iter().enumerate() {
        if key(r) < key(&rows[best]) {
            best = i;
        }
    }
    rows[best].lambda
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0f64; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        // Ties share the average of the ranks they straddle (1-based).
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            ranks[t] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks on ties; 0 when either
/// column is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "rank correlation needs paired columns");
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - mean) * (y - mean);
        va += (x - mean) * (x - mean);
        vb += (y - mean) * (y - mean);
    }
    if va <= 0.0 || vb <= 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Renders the sweep as CSV: header `lambda,mse,d2_bits,thm2_bound`, rows in
/// ascending λ, every float with 12 significant digits, `\n` line endings.
pub fn csv_string(result: &ExperimentResult) -> String {
    let mut out = String::from("lambda,mse,d2_bits,thm2_bound\n");
    for r in &result.rows {
        out.push_str(&format!(
            "{:.11e},{:.11e},{:.11e},{:.11e}\n",
            r.lambda, r.mse, r.divergence_bits, r.thm2_bound
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suites::count_violations;

    fn small_cfg() -> GaussianGridConfig {
        GaussianGridConfig {
            grid_cells: 16,
            n_train: 600,
            n_test: 600,
            lambda_steps: 11,
            ..GaussianGridConfig::default()
        }
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let mut cfg = GaussianGridConfig::default();
        cfg.grid_cells = 7;
        assert!(cfg.validate().is_err());
        cfg = GaussianGridConfig::default();
        cfg.lambda_steps = 2;
        assert!(cfg.validate().is_err());
        cfg = GaussianGridConfig::default();
        cfg.variance = 0.0;
        assert!(cfg.validate().is_err());
        cfg = GaussianGridConfig::default();
        cfg.alpha = 1.0;
        assert!(cfg.validate().is_err());
        assert!(GaussianGridConfig::default().validate().is_ok());
    }

    #[test]
    fn single_origin_gaussian_has_dihedral_symmetry() {
        let cfg = GaussianGridConfig {
            grid_cells: 12,
            ..GaussianGridConfig::default()
        };
        let d = discretize_gaussian_mixture(&[([0.0, 0.0], 1.0)], &cfg).unwrap();
        let c = cfg.grid_cells;
        let at = |ix: usize, iy: usize| d.probs()[iy * c + ix];
        for iy in 0..c {
            for ix in 0..c {
                let v = at(ix, iy);
                // Reflections across both axes and the diagonal generate the
                // full 8-element symmetry group of the square.
                assert!((v - at(c - 1 - ix, iy)).abs() <= 1e-12);
                assert!((v - at(ix, c - 1 - iy)).abs() <= 1e-12);
                assert!((v - at(iy, ix)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn zero_weight_component_changes_nothing() {
        let cfg = small_cfg();
        let single = discretize_gaussian_mixture(&[([0.7, -0.3], 1.0)], &cfg).unwrap();
        let padded =
            discretize_gaussian_mixture(&[([0.7, -0.3], 1.0), ([2.0, 2.0], 0.0)], &cfg).unwrap();
        for (a, b) in single.probs().iter().zip(padded.probs()) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn four_center_mixture_has_quarter_turn_symmetry() {
        let cfg = small_cfg();
        let comps: Vec<([f64; 2], f64)> = cfg
            .centers
            .iter()
            .map(|&c| (c, 0.25))
            .collect();
        let d = discretize_gaussian_mixture(&comps, &cfg).unwrap();
        let c = cfg.grid_cells;
        for iy in 0..c {
            for ix in 0..c {
                // Quarter turn: (x, y) → (-y, x) maps cell (ix, iy) to
                // (c-1-iy, ix).
                let rot = ix * c + (c - 1 - iy);
                assert!((d.probs()[iy * c + ix] - d.probs()[rot]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn mixture_weights_off_simplex_are_rejected() {
        let cfg = small_cfg();
        assert!(discretize_gaussian_mixture(&[([0.0, 0.0], 0.7)], &cfg).is_err());
        assert!(discretize_gaussian_mixture(&[([0.0, 0.0], -0.2), ([1.0, 1.0], 1.2)], &cfg)
            .is_err());
        assert!(discretize_gaussian_mixture(&[], &cfg).is_err());
    }

    #[test]
    fn sampling_a_point_mass_always_returns_it() {
        let support = Support::new(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let d = Dist::new(Arc::clone(&support), vec![0.0, 1.0, 0.0]).unwrap();
        let draws = sample_dist(&d, 500, 11, 0).unwrap();
        assert!(draws.iter().all(|&x| x == 1));
    }

    #[test]
    fn sampling_frequencies_match_a_two_point_uniform() {
        let support = Support::new(vec!["a".into(), "b".into()]).unwrap();
        let d = Dist::new(Arc::clone(&support), vec![0.5, 0.5]).unwrap();
        let n = 1_000_000;
        let draws = sample_dist(&d, n, 4, 9).unwrap();
        let ones = draws.iter().filter(|&&x| x == 1).count() as f64 / n as f64;
        assert!((ones - 0.5).abs() < 0.002, "frequency {ones} drifted");
    }

    #[test]
    fn sampling_is_reproducible_and_stream_sensitive() {
        let cfg = small_cfg();
        let d = discretize_gaussian_mixture(&[([1.0, 1.0], 1.0)], &cfg).unwrap();
        let a = sample_dist(&d, 200, 42, 3).unwrap();
        let b = sample_dist(&d, 200, 42, 3).unwrap();
        let c = sample_dist(&d, 200, 42, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(sample_dist(&d, 0, 42, 3).is_err());
    }

    #[test]
    fn empirical_estimate_matches_hand_computation() {
        let support = Support::new(vec!["a".into(), "b".into()]).unwrap();
        let d = empirical_dist(&[0, 0, 1], &support, 1.0).unwrap();
        assert!((d.probs()[0] - 0.6).abs() < 1e-15);
        assert!((d.probs()[1] - 0.4).abs() < 1e-15);
        let raw = empirical_dist(&[0, 0, 1], &support, 0.0).unwrap();
        assert!((raw.probs()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!(empirical_dist(&[], &support, 1.0).is_err());
        assert!(empirical_dist(&[5], &support, 1.0).is_err());
    }

    #[test]
    fn constant_labels_train_to_a_constant_hypothesis() {
        let cfg = small_cfg();
        let support = grid_support(&cfg).unwrap();
        let samples: Vec<usize> = vec![3, 40, 77, 130, 201];
        let labels = vec![0.3; samples.len()];
        let h = train_least_squares(&samples, &labels, &support).unwrap();
        for &v in h.values() {
            assert!((v - 0.3).abs() < 1e-6, "value {v} is not the constant");
        }
    }

    #[test]
    fn exactly_linear_labels_are_recovered() {
        let cfg = small_cfg();
        let support = grid_support(&cfg).unwrap();
        let coords = support.coords().unwrap();
        // Spread the sample over the grid; keep predictions strictly inside
        // (0, 1) everywhere so clamping never bites.
        let samples: Vec<usize> = (0..support.len()).step_by(7).collect();
        let labels: Vec<f64> = samples
            .iter()
            .map(|&s| 0.02 * coords[s][0] + 0.03 * coords[s][1] + 0.5)
            .collect();
        let h = train_least_squares(&samples, &labels, &support).unwrap();
        for x in 0..support.len() {
            let want = 0.02 * coords[x][0] + 0.03 * coords[x][1] + 0.5;
            assert!((h.values()[x] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn symmetric_quadrant_labels_leave_no_linear_signal() {
        let cfg = GaussianGridConfig {
            grid_cells: 32,
            ..GaussianGridConfig::default()
        };
        let world = build_world(&cfg).unwrap();
        let samples = sample_dist(&world.p, 100_000, 5, 77).unwrap();
        let labels: Vec<f64> = samples.iter().map(|&s| world.f.values()[s]).collect();
        let h = train_least_squares(&samples, &labels, &world.support).unwrap();
        // The checkerboard target is uncorrelated with either coordinate, so
        // the fit collapses to roughly the label mean everywhere.
        let mean = labels.iter().sum::<f64>() / labels.len() as f64;
        for &v in h.values() {
            assert!((v - mean).abs() < 0.05, "fit value {v} vs mean {mean}");
        }
    }

    #[test]
    fn train_input_validation() {
        let cfg = small_cfg();
        let support = grid_support(&cfg).unwrap();
        assert!(train_least_squares(&[0, 1], &[0.0, 1.0], &support).is_err());
        assert!(train_least_squares(&[0, 1, 2], &[0.0, 1.0], &support).is_err());
        assert!(train_least_squares(&[0, 1, 2], &[0.0, 1.0, f64::NAN], &support).is_err());
        let bare = Support::new(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        assert!(train_least_squares(&[0, 1, 2], &[0.0, 1.0, 0.5], &bare).is_err());
    }

    #[test]
    fn sweep_endpoints_reduce_to_the_single_source_rules() {
        let cfg = small_cfg();
        let world = build_world(&cfg).unwrap();
        let h1 = train_source_hypothesis(&world, &cfg, 0, &world.f).unwrap();
        let h2 = train_source_hypothesis(&world, &cfg, 1, &world.f).unwrap();
        let result = run_gaussian_experiment(&cfg).unwrap();
        let test = sample_dist(&world.p, cfg.n_test, cfg.seed, TEST_STREAM).unwrap();
        let mse_of = |h: &Hypothesis| {
            test.iter()
                .map(|&x| (h.values()[x] - world.f.values()[x]).powi(2))
                .sum::<f64>()
                / test.len() as f64
        };
        let first = result.rows.first().unwrap();
        let last = result.rows.last().unwrap();
        assert_eq!(first.lambda, 0.0);
        assert_eq!(last.lambda, 1.0);
        assert!((first.mse - mse_of(&h2)).abs() < 1e-12);
        assert!((last.mse - mse_of(&h1)).abs() < 1e-12);
    }

    #[test]
    fn sweep_is_bitwise_deterministic() {
        let cfg = small_cfg();
        let a = run_gaussian_experiment(&cfg).unwrap();
        let b = run_gaussian_experiment(&cfg).unwrap();
        assert_eq!(csv_string(&a), csv_string(&b));
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert_eq!(x.mse.to_bits(), y.mse.to_bits());
            assert_eq!(x.divergence_bits.to_bits(), y.divergence_bits.to_bits());
            assert_eq!(x.thm2_bound.to_bits(), y.thm2_bound.to_bits());
        }
    }

    #[test]
    fn sweep_divergence_stays_positive_and_error_dips_inside() {
        let cfg = GaussianGridConfig {
            grid_cells: 32,
            n_train: 2_000,
            n_test: 2_000,
            lambda_steps: 21,
            ..GaussianGridConfig::default()
        };
        let result = run_gaussian_experiment(&cfg).unwrap();
        for row in &result.rows {
            assert!(row.divergence_bits > 0.0, "target is not any single mixture");
            assert!(row.mse <= row.thm2_bound + 1e-9, "guarantee column violated");
        }
        assert!(result.argmin_mse > 0.0 && result.argmin_mse < 1.0);
        assert!(result.rank_correlation > 0.0);
        assert!(result.rank_correlation <= 1.0 + 1e-12);
    }

    #[test]
    fn csv_has_header_and_twelve_significant_digits() {
        let cfg = small_cfg();
        let result = run_gaussian_experiment(&cfg).unwrap();
        let csv = csv_string(&result);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("lambda,mse,d2_bits,thm2_bound"));
        let first = lines.next().unwrap();
        assert_eq!(first.split(',').count(), 4);
        for field in first.split(',') {
            let mantissa = field.split('e').next().unwrap();
            let digits = mantissa.chars().filter(|c| c.is_ascii_digit()).count();
            assert_eq!(digits, 12, "field {field} is not 12 significant digits");
        }
        assert!(csv.ends_with('\n') && !csv.contains('\r'));
        assert_eq!(csv.lines().count(), cfg.lambda_steps + 1);
    }

    #[test]
    fn drifted_labels_respect_the_mass_budget() {
        let cfg = small_cfg();
        let world = build_world(&cfg).unwrap();
        let loss = LossSpec::absolute(1.0).unwrap();
        let same = drifted_labels(&world.p, &world.f, 0.0, 3, 0).unwrap();
        assert_eq!(same.values(), world.f.values());
        for pert in [0.05, 0.2, 0.45] {
            for stream in 0..6u64 {
                let drifted = drifted_labels(&world.p, &world.f, pert, 3, stream).unwrap();
                let delta = expected_loss(&world.p, &drifted, &world.f, &loss).unwrap();
                assert!(delta <= pert + 1e-9, "drift {delta} exceeds budget {pert}");
                assert!(drifted.is_boolean());
            }
        }
    }

    #[test]
    fn multi_function_reports_all_hold() {
        let cfg = GaussianGridConfig {
            lambda_steps: 9,
            ..small_cfg()
        };
        for pert in [0.0, 0.25] {
            let reports = run_multi_function_experiment(&cfg, pert).unwrap();
            assert_eq!(reports.len(), 2 * cfg.lambda_steps);
            assert_eq!(count_violations(&reports), 0);
        }
        assert!(run_multi_function_experiment(&cfg, 0.5).is_err());
        assert!(run_multi_function_experiment(&cfg, -0.1).is_err());
    }

    #[test]
    fn estimates_tighten_with_more_training_data() {
        let cfg = GaussianGridConfig {
            grid_cells: 24,
            ..GaussianGridConfig::default()
        };
        let world = build_world(&cfg).unwrap();
        let order = AlphaOrder::finite(2.0).unwrap();
        let median_gap = |n: usize| {
            let mut gaps: Vec<f64> = (0..20u64)
                .map(|s| {
                    let mut worst = 0.0f64;
                    for (i, q) in world.sources.iter().enumerate() {
                        let draws = sample_dist(q, n, 1_000 + s, i as u64).unwrap();
                        let q_hat = empirical_dist(&draws, &world.support, 0.5).unwrap();
                        worst = worst.max(renyi_divergence(q, &q_hat, order).unwrap().bits());
                    }
                    worst
                })
                .collect();
            gaps.sort_by(f64::total_cmp);
            gaps[gaps.len() / 2]
        };
        let (m2, m3, m4) = (median_gap(100), median_gap(1_000), median_gap(10_000));
        assert!(m2 >= m3 - 1e-12 && m3 >= m4 - 1e-12, "{m2} {m3} {m4}");
    }

    #[test]
    fn spearman_handles_ties_and_constants() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), 0.0);
        let with_ties = spearman(&[1.0, 1.0, 2.0, 3.0], &[1.0, 1.0, 2.0, 3.0]);
        assert!((with_ties - 1.0).abs() < 1e-12);
    }
}
