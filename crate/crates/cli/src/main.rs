//! Command-line front end for the multiple-source adaptation toolkit.
//!
//! Every subcommand reads the JSON file formats defined in `msadapt::json`,
//! prints machine-readable JSON to stdout, and uses three exit codes:
//!
//! ```text
//!   0   success
//!   1   input validation error (bad flags, malformed files, bad parameters)
//!   2   solver did not converge to the requested tolerance
//! ```
//!
//! The experiment subcommands additionally write their row data as CSV.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde_json::json;

use msadapt::json as mj;
use msadapt::suites::{count_violations, run_suite, Suite};
use msadapt::{
    adversarial_target, combine, csv_string, fit_mixture, renyi_divergence, robust_fit,
    run_gaussian_experiment, run_multi_function_experiment, AlphaOrder, CombineRule, Dist,
    GaussianGridConfig, Hypothesis, LossSpec, SimplexWeights,
};
use msadapt::fit::{
    DEFAULT_FIT_MAX_ITERS, DEFAULT_FIT_TOL, DEFAULT_ROBUST_DELTA, DEFAULT_ROBUST_ETA,
    DEFAULT_ROBUST_MAX_ITERS,
};

#[derive(Parser)]
#[command(
    name = "msadapt",
    version,
    about = "Multiple-source adaptation: divergences, mixture fitting, hypothesis combining, bound verification, experiments"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Rényi divergence D_alpha(P || Q) of two distribution files.
    Divergence {
        /// Target distribution (JSON).
        #[arg(long)]
        p: PathBuf,
        /// Reference distribution (JSON).
        #[arg(long)]
        q: PathBuf,
        /// Order: "zero", "one", "inf", or a number.
        #[arg(long)]
        alpha: String,
    },
    /// Simplex weights minimizing D_alpha(P || sum_i w_i Q_i).
    Fit {
        #[arg(long)]
        target: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        sources: Vec<PathBuf>,
        /// Order: "one", "inf", or a number > 1.
        #[arg(long)]
        alpha: String,
        /// Convergence tolerance on the objective, in bits.
        #[arg(long, default_value_t = DEFAULT_FIT_TOL)]
        tol: f64,
    },
    /// Combine per-source hypotheses into a single rule.
    Combine {
        /// Combination rule: "dw", "smoothed", or "rnorm".
        #[arg(long)]
        rule: String,
        #[arg(long, num_args = 1.., required = true)]
        sources: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        hyps: Vec<PathBuf>,
        /// Simplex weights (bare JSON array file); uniform when omitted.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Smoothing rate; only valid with the "smoothed" rule.
        #[arg(long)]
        eta: Option<f64>,
        /// Norm order ("inf" or a number >= 1); only valid with "rnorm".
        #[arg(long)]
        r: Option<String>,
        /// Write the combined hypothesis here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scaled-target construction showing the guarantees are near-tight.
    Lowerbound {
        #[arg(long)]
        q: PathBuf,
        #[arg(long)]
        h: PathBuf,
        #[arg(long)]
        f: PathBuf,
        /// Finite order > 1.
        #[arg(long)]
        alpha: f64,
        /// Divergence budget in bits.
        #[arg(long = "delta-alpha")]
        delta_alpha: f64,
    },
    /// Min-max mixture weights for the smoothed combined rule.
    #[command(name = "robust-fit")]
    RobustFit {
        #[arg(long, num_args = 1.., required = true)]
        sources: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        hyps: Vec<PathBuf>,
        #[arg(long)]
        f: PathBuf,
        /// Loss: "absolute", "squared", or "zero-one".
        #[arg(long, default_value = "absolute")]
        loss: String,
        /// Smoothing rate of the combined rule.
        #[arg(long, default_value_t = DEFAULT_ROBUST_ETA)]
        eta: f64,
        /// Acceptable slack of the worst-source loss over the base level;
        /// exceeding it is reported as non-convergence (exit code 2).
        #[arg(long, default_value_t = DEFAULT_ROBUST_DELTA)]
        delta: f64,
        #[arg(long = "max-iters", default_value_t = DEFAULT_ROBUST_MAX_ITERS)]
        max_iters: usize,
    },
    /// Randomized self-check suites for the bound calculators.
    Verify {
        /// One of: lemma1, lemma9, lemma11, lemma12, thm8, thm10, thm13,
        /// thm14, cor15, thm16, thm17.
        #[arg(long)]
        suite: String,
        /// Defaults to the suite's standard tier.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Pin the divergence order instead of cycling the built-in ladder.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Synthetic experiments on the discretized Gaussian-mixture task.
    Experiment {
        #[command(subcommand)]
        which: ExperimentCmd,
    },
}

#[derive(Subcommand)]
enum ExperimentCmd {
    /// λ sweep comparing test error against the divergence curve.
    Gaussian {
        /// Grid cells per axis.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long = "lambda-steps")]
        lambda_steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Divergence order for the divergence/bound columns.
        #[arg(long)]
        alpha: Option<f64>,
        /// CSV destination for the sweep rows.
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
    },
    /// Per-source label drift checked against both multi-function bounds.
    Multifunc {
        /// Label drift strength in [0, 0.5).
        #[arg(long, default_value_t = 0.2)]
        perturbation: f64,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long = "lambda-steps")]
        lambda_steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Write the report array here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            std::process::exit(0);
        }
        Err(e) => {
            eprint!("{e}");
            std::process::exit(1);
        }
    };
    match run(cli.cmd) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

fn run(cmd: Cmd) -> anyhow::Result<i32> {
    match cmd {
        Cmd::Divergence { p, q, alpha } => {
            let order = parse_alpha_token(&alpha)?;
            let p = read_dist(&p)?;
            let q = read_dist(&q)?;
            let div = renyi_divergence(&p, &q, order)?;
            println!(
                "{}",
                json!({
                    "D_alpha_bits": mj::json_float(div.bits()),
                    "d_alpha": mj::json_float(div.linear()),
                })
            );
            Ok(0)
        }
        Cmd::Fit { target, sources, alpha, tol } => {
            let order = parse_alpha_token(&alpha)?;
            let target = read_dist(&target)?;
            let sources = read_dists(&sources)?;
            let result = fit_mixture(&target, &sources, order, tol, DEFAULT_FIT_MAX_ITERS)?;
            println!(
                "{}",
                json!({
                    "weights": result.weights.as_slice(),
                    "objective_bits": mj::json_float(result.objective_bits),
                    "iterations": result.iterations,
                    "converged": result.converged,
                })
            );
            Ok(if result.converged { 0 } else { 2 })
        }
        Cmd::Combine { rule, sources, hyps, weights, eta, r, out } => {
            let sources = read_dists(&sources)?;
            let hyps = read_hyps(&hyps)?;
            let rule = build_rule(&rule, sources.len(), weights.as_deref(), eta, r.as_deref())?;
            let combined = combine(&sources, &hyps, &rule)?;
            let text = mj::hypothesis_to_json(&combined);
            match out {
                Some(path) => {
                    fs::write(&path, text + "\n")
                        .with_context(|| format!("writing {}", path.display()))?;
                    println!(
                        "{}",
                        json!({
                            "out": path.display().to_string(),
                            "support": combined.support().len(),
                        })
                    );
                }
                None => println!("{text}"),
            }
            Ok(0)
        }
        Cmd::Lowerbound { q, h, f, alpha, delta_alpha } => {
            let q = read_dist(&q)?;
            let h = read_hyp(&h)?;
            let f = read_hyp(&f)?;
            let result = adversarial_target(&q, &h, &f, alpha, delta_alpha)?;
            println!(
                "{}",
                json!({
                    "p": {"support": result.p.support().ids(), "probs": result.p.probs()},
                    "r_factor": mj::json_float(result.r_factor),
                    "delta_alpha": mj::json_float(result.delta_alpha),
                    "realized_divergence_bits": mj::json_float(result.realized_divergence_bits),
                    "realized_loss": mj::json_float(result.realized_loss),
                })
            );
            Ok(0)
        }
        Cmd::RobustFit { sources, hyps, f, loss, eta, delta, max_iters } => {
            let sources = read_dists(&sources)?;
            let hyps = read_hyps(&hyps)?;
            let f = read_hyp(&f)?;
            let range = hyps
                .iter()
                .map(Hypothesis::range_bound)
                .fold(f.range_bound(), f64::max);
            let loss = parse_loss(&loss, range)?;
            let result = robust_fit(&sources, &hyps, &f, &loss, eta, delta, max_iters)?;
            println!(
                "{}",
                json!({
                    "weights": result.weights.as_slice(),
                    "eta": result.eta,
                    "worst_source_loss": mj::json_float(result.worst_source_loss),
                    "delta": mj::json_float(result.delta),
                    "delta_requested": delta,
                })
            );
            Ok(if result.delta <= delta + 1e-12 { 0 } else { 2 })
        }
        Cmd::Verify { suite, trials, seed, alpha } => {
            let suite: Suite = suite.parse()?;
            let trials = trials.unwrap_or_else(|| suite.default_trials());
            let reports = run_suite(suite, trials, seed, alpha)?;
            let violations = count_violations(&reports);
            println!("{}", mj::reports_to_json(&reports));
            println!(
                "{}",
                json!({"suite": suite.to_string(), "trials": trials, "violations": violations})
            );
            Ok(0)
        }
        Cmd::Experiment { which } => run_experiment(which),
    }
}

fn run_experiment(cmd: ExperimentCmd) -> anyhow::Result<i32> {
    match cmd {
        ExperimentCmd::Gaussian { grid, lambda_steps, seed, alpha, out } => {
            let cfg = make_config(grid, lambda_steps, seed, alpha);
            let result = run_gaussian_experiment(&cfg)?;
            fs::write(&out, csv_string(&result))
                .with_context(|| format!("writing {}", out.display()))?;
            let mut summary = mj::experiment_summary_json(&result);
            summary["csv"] = json!(out.display().to_string());
            println!("{summary}");
            Ok(0)
        }
        ExperimentCmd::Multifunc { perturbation, grid, lambda_steps, seed, alpha, out } => {
            let cfg = make_config(grid, lambda_steps, seed, alpha);
            let reports = run_multi_function_experiment(&cfg, perturbation)?;
            let violations = count_violations(&reports);
            let text = mj::reports_to_json(&reports);
            match out {
                Some(path) => fs::write(&path, text + "\n")
                    .with_context(|| format!("writing {}", path.display()))?,
                None => println!("{text}"),
            }
            println!(
                "{}",
                json!({
                    "reports": reports.len(),
                    "perturbation": perturbation,
                    "violations": violations,
                })
            );
            Ok(0)
        }
    }
}

fn make_config(
    grid: Option<usize>,
    lambda_steps: Option<usize>,
    seed: Option<u64>,
    alpha: Option<f64>,
) -> GaussianGridConfig {
    let mut cfg = GaussianGridConfig::default();
    if let Some(g) = grid {
        cfg.grid_cells = g;
    }
    if let Some(s) = lambda_steps {
        cfg.lambda_steps = s;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(a) = alpha {
        cfg.alpha = a;
    }
    cfg
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_dist(path: &Path) -> anyhow::Result<Dist> {
    Ok(mj::dist_from_json(&read_text(path)?)
        .with_context(|| format!("in {}", path.display()))?)
}

fn read_dists(paths: &[PathBuf]) -> anyhow::Result<Vec<Dist>> {
    paths.iter().map(|p| read_dist(p)).collect()
}

fn read_hyp(path: &Path) -> anyhow::Result<Hypothesis> {
    Ok(mj::hypothesis_from_json(&read_text(path)?)
        .with_context(|| format!("in {}", path.display()))?)
}

fn read_hyps(paths: &[PathBuf]) -> anyhow::Result<Vec<Hypothesis>> {
    paths.iter().map(|p| read_hyp(p)).collect()
}

fn parse_alpha_token(token: &str) -> anyhow::Result<AlphaOrder> {
    let t = token.trim();
    Ok(match t {
        "zero" => AlphaOrder::Zero,
        "one" => AlphaOrder::One,
        "inf" | "infinity" => AlphaOrder::Infinity,
        _ => {
            let a: f64 = t.parse().map_err(|_| {
                anyhow!("alpha must be \"zero\", \"one\", \"inf\", or a number, got {t:?}")
            })?;
            AlphaOrder::from_real(a)?
        }
    })
}

fn parse_norm_order(token: &str) -> anyhow::Result<f64> {
    let t = token.trim();
    if t == "inf" || t == "infinity" {
        return Ok(f64::INFINITY);
    }
    t.parse()
        .map_err(|_| anyhow!("r must be \"inf\" or a number, got {t:?}"))
}

fn parse_loss(name: &str, range: f64) -> anyhow::Result<LossSpec> {
    Ok(match name {
        "absolute" => LossSpec::absolute(range)?,
        "squared" => LossSpec::squared(range)?,
        "zero-one" | "zero_one" => LossSpec::zero_one(),
        other => bail!("unknown loss {other:?}; expected absolute, squared, or zero-one"),
    })
}

fn build_rule(
    name: &str,
    k: usize,
    weights: Option<&Path>,
    eta: Option<f64>,
    r: Option<&str>,
) -> anyhow::Result<CombineRule> {
    let read_weights = |weights: Option<&Path>| -> anyhow::Result<SimplexWeights> {
        match weights {
            Some(path) => Ok(mj::weights_from_json(&read_text(path)?)
                .with_context(|| format!("in {}", path.display()))?),
            None => Ok(SimplexWeights::uniform(k)?),
        }
    };
    match name {
        "dw" => {
            if eta.is_some() {
                bail!("--eta only applies to the smoothed rule");
            }
            if r.is_some() {
                bail!("--r only applies to the rnorm rule");
            }
            Ok(CombineRule::DistributionWeighted { weights: read_weights(weights)? })
        }
        "smoothed" => {
            if r.is_some() {
                bail!("--r only applies to the rnorm rule");
            }
            Ok(CombineRule::Smoothed {
                weights: read_weights(weights)?,
                eta: eta.unwrap_or(DEFAULT_ROBUST_ETA),
            })
        }
        "rnorm" => {
            if weights.is_some() {
                bail!("the rnorm rule takes no --weights");
            }
            if eta.is_some() {
                bail!("--eta only applies to the smoothed rule");
            }
            let r = r.ok_or_else(|| anyhow!("--r is required for the rnorm rule"))?;
            Ok(CombineRule::RNorm { r: parse_norm_order(r)? })
        }
        other => bail!("unknown rule {other:?}; expected dw, smoothed, or rnorm"),
    }
}
