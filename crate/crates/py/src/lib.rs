//! Python bindings for the `msadapt` crate.
//!
//! The module imports as `msadapt_py` and mirrors the core API: supports,
//! distributions, and hypotheses are thin wrapper classes; operations return
//! plain dicts/lists so results drop straight into Python tooling. Infinite
//! divergences come back as `float("inf")`.
//!
//! Build with `maturin develop` or
//! `cargo build -p msadapt-py --release --features extension-module`, then
//! place the produced `cdylib` on `sys.path` as `msadapt_py.so`.

use std::str::FromStr;
use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use msadapt::fit::{
    DEFAULT_FIT_MAX_ITERS, DEFAULT_FIT_TOL, DEFAULT_ROBUST_DELTA, DEFAULT_ROBUST_ETA,
    DEFAULT_ROBUST_MAX_ITERS,
};

fn err(e: msadapt::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A divergence (or norm) order given either as a number or as one of the
/// named tokens `"zero"`, `"one"`, `"inf"`.
#[derive(FromPyObject)]
enum OrderArg {
    #[pyo3(transparent)]
    Value(f64),
    #[pyo3(transparent)]
    Name(String),
}

impl OrderArg {
    fn order(&self) -> PyResult<msadapt::AlphaOrder> {
        match self {
            OrderArg::Value(a) => msadapt::AlphaOrder::from_real(*a).map_err(err),
            OrderArg::Name(s) => msadapt::AlphaOrder::from_str(s).map_err(err),
        }
    }

    fn norm(&self) -> PyResult<f64> {
        match self {
            OrderArg::Value(r) => Ok(*r),
            OrderArg::Name(s) => match s.trim().to_ascii_lowercase().as_str() {
                "inf" | "infinity" => Ok(f64::INFINITY),
                other => other.parse().map_err(|_| {
                    PyValueError::new_err(format!("expected a number or 'inf', got {other:?}"))
                }),
            },
        }
    }
}

fn loss_spec(kind: &str, range_bound: f64) -> PyResult<msadapt::LossSpec> {
    match kind {
        "zero_one" | "zero-one" => Ok(msadapt::LossSpec::zero_one()),
        "absolute" => msadapt::LossSpec::absolute(range_bound).map_err(err),
        "squared" => msadapt::LossSpec::squared(range_bound).map_err(err),
        other => Err(PyValueError::new_err(format!(
            "unknown loss {other:?} (expected zero_one, absolute, or squared)"
        ))),
    }
}

/// Largest range bound among the function and hypotheses, used as the loss
/// range when the caller does not pass one.
fn default_range(f: &Hypothesis, hyps: &[Hypothesis]) -> f64 {
    hyps.iter()
        .map(|h| h.inner.range_bound())
        .fold(f.inner.range_bound(), f64::max)
}

fn report_dict<'py>(py: Python<'py>, r: &msadapt::BoundReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("theorem_id", r.theorem_id.to_string())?;
    d.set_item("bound_value", r.bound_value)?;
    d.set_item("measured_value", r.measured_value)?;
    d.set_item("margin", r.margin)?;
    d.set_item("holds", r.holds)?;
    d.set_item("vacuous", r.vacuous)?;
    d.set_item("inputs_digest", r.inputs_digest.as_str())?;
    Ok(d)
}

fn report_list<'py>(py: Python<'py>, rs: &[msadapt::BoundReport]) -> PyResult<Bound<'py, PyList>> {
    let out = PyList::empty(py);
    for r in rs {
        out.append(report_dict(py, r)?)?;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Wrapper classes
// ---------------------------------------------------------------------------

/// Ordered finite set of points shared by distributions and hypotheses.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Support {
    inner: Arc<msadapt::Support>,
}

#[pymethods]
impl Support {
    #[new]
    #[pyo3(signature = (points, coords=None))]
    fn new(points: Vec<String>, coords: Option<Vec<Vec<f64>>>) -> PyResult<Self> {
        let inner = match coords {
            Some(coords) => msadapt::Support::with_coords(points, coords).map_err(err)?,
            None => msadapt::Support::new(points).map_err(err)?,
        };
        Ok(Support { inner })
    }

    #[getter]
    fn points(&self) -> Vec<String> {
        self.inner.ids().to_vec()
    }

    /// Index of `id` in the support, or None.
    fn position(&self, id: &str) -> Option<usize> {
        self.inner.position(id)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Support({} points)", self.inner.len())
    }
}

/// Probability distribution over a support.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Dist {
    inner: msadapt::Dist,
}

#[pymethods]
impl Dist {
    #[new]
    fn new(support: Support, probs: Vec<f64>) -> PyResult<Self> {
        Ok(Dist { inner: msadapt::Dist::new(support.inner, probs).map_err(err)? })
    }

    /// Uniform distribution over `support`.
    #[staticmethod]
    fn uniform(support: Support) -> Self {
        Dist { inner: msadapt::model::uniform_dist(&support.inner) }
    }

    #[getter]
    fn probs(&self) -> Vec<f64> {
        self.inner.probs().to_vec()
    }

    #[getter]
    fn support(&self) -> Support {
        Support { inner: Arc::clone(self.inner.support()) }
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Dist({} points)", self.inner.len())
    }
}

/// Real-valued function on a support, with a declared range bound.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Hypothesis {
    inner: msadapt::Hypothesis,
}

#[pymethods]
impl Hypothesis {
    #[new]
    #[pyo3(signature = (support, values, range_bound=1.0))]
    fn new(support: Support, values: Vec<f64>, range_bound: f64) -> PyResult<Self> {
        Ok(Hypothesis {
            inner: msadapt::Hypothesis::new(support.inner, values, range_bound).map_err(err)?,
        })
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    #[getter]
    fn range_bound(&self) -> f64 {
        self.inner.range_bound()
    }

    /// True when every value is exactly 0 or 1.
    fn is_boolean(&self) -> bool {
        self.inner.is_boolean()
    }

    #[getter]
    fn support(&self) -> Support {
        Support { inner: Arc::clone(self.inner.support()) }
    }

    fn __len__(&self) -> usize {
        self.inner.values().len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Hypothesis({} points, range_bound={})",
            self.inner.values().len(),
            self.inner.range_bound()
        )
    }
}

// ---------------------------------------------------------------------------
// Divergences and losses
// ---------------------------------------------------------------------------

/// Divergence of order `alpha` between `p` and `q`, as
/// `{"bits": D_alpha, "linear": 2**D_alpha}`. Both are `inf` when `q`
/// misses mass that `p` needs.
#[pyfunction]
fn renyi_divergence<'py>(
    py: Python<'py>,
    p: Dist,
    q: Dist,
    alpha: OrderArg,
) -> PyResult<Bound<'py, PyDict>> {
    let d = msadapt::renyi_divergence(&p.inner, &q.inner, alpha.order()?).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("bits", d.bits())?;
    out.set_item("linear", d.linear())?;
    Ok(out)
}

/// Entropy of order `alpha` of `p`, in bits.
#[pyfunction]
fn renyi_entropy(p: Dist, alpha: OrderArg) -> PyResult<f64> {
    Ok(msadapt::renyi_entropy(&p.inner, alpha.order()?))
}

/// Expected loss `E_p[loss(h(x), f(x))]`. The loss range defaults to the
/// larger of the two range bounds.
#[pyfunction]
#[pyo3(signature = (p, h, f, loss="absolute", range_bound=None))]
fn expected_loss(
    p: Dist,
    h: Hypothesis,
    f: Hypothesis,
    loss: &str,
    range_bound: Option<f64>,
) -> PyResult<f64> {
    let range = range_bound.unwrap_or_else(|| default_range(&f, std::slice::from_ref(&h)));
    let spec = loss_spec(loss, range)?;
    msadapt::model::expected_loss(&p.inner, &h.inner, &f.inner, &spec).map_err(err)
}

/// Convex combination `sum_i weights[i] * sources[i]`.
#[pyfunction]
fn mixture(sources: Vec<Dist>, weights: Vec<f64>) -> PyResult<Dist> {
    let sources: Vec<msadapt::Dist> = sources.into_iter().map(|d| d.inner).collect();
    let weights = msadapt::SimplexWeights::new(weights).map_err(err)?;
    Ok(Dist { inner: msadapt::model::mixture(&sources, &weights).map_err(err)? })
}

// ---------------------------------------------------------------------------
// Combining rules
// ---------------------------------------------------------------------------

/// Combine per-source hypotheses into one. Rules: `"dw"` (distribution
/// weighted; optional `weights`, uniform by default), `"smoothed"` (adds
/// `eta` * uniform to every source first), `"rnorm"` (norm-weighted with
/// order `r`, a number or `"inf"`).
#[pyfunction]
#[pyo3(signature = (sources, hyps, rule="dw", weights=None, eta=None, r=None))]
fn combine(
    sources: Vec<Dist>,
    hyps: Vec<Hypothesis>,
    rule: &str,
    weights: Option<Vec<f64>>,
    eta: Option<f64>,
    r: Option<OrderArg>,
) -> PyResult<Hypothesis> {
    let k = sources.len();
    let simplex = |w: Option<Vec<f64>>| -> PyResult<msadapt::SimplexWeights> {
        match w {
            Some(w) => msadapt::SimplexWeights::new(w).map_err(err),
            None => msadapt::SimplexWeights::uniform(k).map_err(err),
        }
    };
    let reject = |flag: &str, ok: bool| -> PyResult<()> {
        if ok {
            Ok(())
        } else {
            Err(PyValueError::new_err(format!("rule {rule:?} does not take {flag}")))
        }
    };
    let rule = match rule {
        "dw" => {
            reject("eta", eta.is_none())?;
            reject("r", r.is_none())?;
            msadapt::CombineRule::DistributionWeighted { weights: simplex(weights)? }
        }
        "smoothed" => {
            reject("r", r.is_none())?;
            msadapt::CombineRule::Smoothed {
                weights: simplex(weights)?,
                eta: eta.unwrap_or(DEFAULT_ROBUST_ETA),
            }
        }
        "rnorm" => {
            reject("weights", weights.is_none())?;
            reject("eta", eta.is_none())?;
            let r = r.ok_or_else(|| PyValueError::new_err("rule 'rnorm' needs r"))?;
            msadapt::CombineRule::RNorm { r: r.norm()? }
        }
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown rule {other:?} (expected dw, smoothed, or rnorm)"
            )))
        }
    };
    let sources: Vec<msadapt::Dist> = sources.into_iter().map(|d| d.inner).collect();
    let hyps: Vec<msadapt::Hypothesis> = hyps.into_iter().map(|h| h.inner).collect();
    Ok(Hypothesis { inner: msadapt::combine(&sources, &hyps, &rule).map_err(err)? })
}

// ---------------------------------------------------------------------------
// Solvers
// ---------------------------------------------------------------------------

/// Weights on the simplex minimizing `D_alpha(target || sum_i w_i Q_i)`.
/// Returns `{"weights", "objective_bits", "iterations", "converged"}`.
#[pyfunction]
#[pyo3(signature = (target, sources, alpha, tol=DEFAULT_FIT_TOL, max_iters=DEFAULT_FIT_MAX_ITERS))]
fn fit_mixture<'py>(
    py: Python<'py>,
    target: Dist,
    sources: Vec<Dist>,
    alpha: OrderArg,
    tol: f64,
    max_iters: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let sources: Vec<msadapt::Dist> = sources.into_iter().map(|d| d.inner).collect();
    let fit = msadapt::fit_mixture(&target.inner, &sources, alpha.order()?, tol, max_iters)
        .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("weights", fit.weights.as_slice().to_vec())?;
    out.set_item("objective_bits", fit.objective_bits)?;
    out.set_item("iterations", fit.iterations)?;
    out.set_item("converged", fit.converged)?;
    Ok(out)
}

/// Weights whose smoothed combined hypothesis keeps every source loss within
/// `delta` of the best single worst-case source loss. Returns
/// `{"weights", "eta", "worst_source_loss", "delta"}`.
#[pyfunction]
#[pyo3(signature = (
    sources, hyps, f, loss="absolute", range_bound=None,
    eta=DEFAULT_ROBUST_ETA, delta=DEFAULT_ROBUST_DELTA, max_iters=DEFAULT_ROBUST_MAX_ITERS,
))]
#[allow(clippy::too_many_arguments)]
fn robust_fit<'py>(
    py: Python<'py>,
    sources: Vec<Dist>,
    hyps: Vec<Hypothesis>,
    f: Hypothesis,
    loss: &str,
    range_bound: Option<f64>,
    eta: f64,
    delta: f64,
    max_iters: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let range = range_bound.unwrap_or_else(|| default_range(&f, &hyps));
    let spec = loss_spec(loss, range)?;
    let sources: Vec<msadapt::Dist> = sources.into_iter().map(|d| d.inner).collect();
    let hyps: Vec<msadapt::Hypothesis> = hyps.into_iter().map(|h| h.inner).collect();
    let result =
        msadapt::robust_fit(&sources, &hyps, &f.inner, &spec, eta, delta, max_iters).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("weights", result.weights.as_slice().to_vec())?;
    out.set_item("eta", result.eta)?;
    out.set_item("worst_source_loss", result.worst_source_loss)?;
    out.set_item("delta", result.delta)?;
    Ok(out)
}

/// Target distribution scaling `q` up on the error set of `h` against `f`
/// (both Boolean) until the divergence budget `delta_alpha` bits is spent.
/// Returns `{"target", "r_factor", "delta_alpha", "realized_divergence_bits",
/// "realized_loss"}`.
#[pyfunction]
fn adversarial_target<'py>(
    py: Python<'py>,
    q: Dist,
    h: Hypothesis,
    f: Hypothesis,
    alpha: f64,
    delta_alpha: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let t = msadapt::adversarial_target(&q.inner, &h.inner, &f.inner, alpha, delta_alpha)
        .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("target", Dist { inner: t.p }.into_pyobject(py)?)?;
    out.set_item("r_factor", t.r_factor)?;
    out.set_item("delta_alpha", t.delta_alpha)?;
    out.set_item("realized_divergence_bits", t.realized_divergence_bits)?;
    out.set_item("realized_loss", t.realized_loss)?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Bounds and verification suites
// ---------------------------------------------------------------------------

/// Bound on `L_p(h, f)` in terms of the loss under `q` and the divergence
/// of order `alpha`, as a report dict. `tight=True` uses the sharper
/// moment form.
#[pyfunction]
#[pyo3(signature = (p, q, h, f, alpha, loss="absolute", range_bound=None, tight=false))]
#[allow(clippy::too_many_arguments)]
fn loss_transfer_bound<'py>(
    py: Python<'py>,
    p: Dist,
    q: Dist,
    h: Hypothesis,
    f: Hypothesis,
    alpha: OrderArg,
    loss: &str,
    range_bound: Option<f64>,
    tight: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let range = range_bound.unwrap_or_else(|| default_range(&f, std::slice::from_ref(&h)));
    let spec = loss_spec(loss, range)?;
    let report = msadapt::bounds::lemma1_bound(
        &p.inner,
        &q.inner,
        &h.inner,
        &f.inner,
        &spec,
        alpha.order()?,
        tight,
    )
    .map_err(err)?;
    report_dict(py, &report)
}

/// Run `trials` randomized checks of one inequality suite (`"lemma1"`,
/// `"lemma9"`, `"lemma11"`, `"lemma12"`, `"thm8"`, `"thm10"`, `"thm13"`,
/// `"thm14"`, `"cor15"`, `"thm16"`, `"thm17"`). Returns the report dicts;
/// a report with `holds == False` is a violation.
#[pyfunction]
#[pyo3(signature = (suite, trials=None, seed=42, alpha=None))]
fn run_suite<'py>(
    py: Python<'py>,
    suite: &str,
    trials: Option<usize>,
    seed: u64,
    alpha: Option<f64>,
) -> PyResult<Bound<'py, PyList>> {
    let suite = msadapt::suites::Suite::from_str(suite).map_err(err)?;
    let trials = trials.unwrap_or_else(|| suite.default_trials());
    let reports = msadapt::suites::run_suite(suite, trials, seed, alpha).map_err(err)?;
    report_list(py, &reports)
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

fn grid_config(
    grid_cells: usize,
    lambda_steps: usize,
    seed: u64,
    alpha: f64,
    n_train: usize,
    n_test: usize,
    variance: f64,
    grid_extent: f64,
) -> msadapt::GaussianGridConfig {
    msadapt::GaussianGridConfig {
        grid_cells,
        lambda_steps,
        seed,
        alpha,
        n_train,
        n_test,
        variance,
        grid_extent,
        ..Default::default()
    }
}

/// Two-source Gaussian grid experiment: per-lambda test MSE, divergence, and
/// the loss-transfer bound. Returns `{"rows", "argmin_mse", "argmin_div",
/// "rank_correlation", "csv"}`; rows are dicts keyed like the CSV columns.
#[pyfunction]
#[pyo3(signature = (
    grid_cells=64, lambda_steps=101, seed=7, alpha=2.0,
    n_train=5000, n_test=5000, variance=1.0, grid_extent=4.0,
))]
#[allow(clippy::too_many_arguments)]
fn run_gaussian_experiment<'py>(
    py: Python<'py>,
    grid_cells: usize,
    lambda_steps: usize,
    seed: u64,
    alpha: f64,
    n_train: usize,
    n_test: usize,
    variance: f64,
    grid_extent: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg =
        grid_config(grid_cells, lambda_steps, seed, alpha, n_train, n_test, variance, grid_extent);
    let result = msadapt::run_gaussian_experiment(&cfg).map_err(err)?;
    let rows = PyList::empty(py);
    for row in &result.rows {
        let d = PyDict::new(py);
        d.set_item("lambda", row.lambda)?;
        d.set_item("mse", row.mse)?;
        d.set_item("divergence_bits", row.divergence_bits)?;
        d.set_item("thm2_bound", row.thm2_bound)?;
        rows.append(d)?;
    }
    let out = PyDict::new(py);
    out.set_item("rows", rows)?;
    out.set_item("argmin_mse", result.argmin_mse)?;
    out.set_item("argmin_div", result.argmin_div)?;
    out.set_item("rank_correlation", result.rank_correlation)?;
    out.set_item("csv", msadapt::csv_string(&result))?;
    Ok(out)
}

/// Variant with per-source label drift of size `perturbation`; checks the
/// multi-function bounds at every lambda and returns the report dicts.
#[pyfunction]
#[pyo3(signature = (
    perturbation=0.2, grid_cells=64, lambda_steps=101, seed=7, alpha=2.0,
    n_train=5000, n_test=5000, variance=1.0, grid_extent=4.0,
))]
#[allow(clippy::too_many_arguments)]
fn run_multi_function_experiment<'py>(
    py: Python<'py>,
    perturbation: f64,
    grid_cells: usize,
    lambda_steps: usize,
    seed: u64,
    alpha: f64,
    n_train: usize,
    n_test: usize,
    variance: f64,
    grid_extent: f64,
) -> PyResult<Bound<'py, PyList>> {
    let cfg =
        grid_config(grid_cells, lambda_steps, seed, alpha, n_train, n_test, variance, grid_extent);
    let reports = msadapt::run_multi_function_experiment(&cfg, perturbation).map_err(err)?;
    report_list(py, &reports)
}

// ---------------------------------------------------------------------------
// Module
// ---------------------------------------------------------------------------

#[pymodule]
fn msadapt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Support>()?;
    m.add_class::<Dist>()?;
    m.add_class::<Hypothesis>()?;
    m.add_function(wrap_pyfunction!(renyi_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(renyi_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(expected_loss, m)?)?;
    m.add_function(wrap_pyfunction!(mixture, m)?)?;
    m.add_function(wrap_pyfunction!(combine, m)?)?;
    m.add_function(wrap_pyfunction!(fit_mixture, m)?)?;
    m.add_function(wrap_pyfunction!(robust_fit, m)?)?;
    m.add_function(wrap_pyfunction!(adversarial_target, m)?)?;
    m.add_function(wrap_pyfunction!(loss_transfer_bound, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    m.add_function(wrap_pyfunction!(run_gaussian_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_multi_function_experiment, m)?)?;
    Ok(())
}
