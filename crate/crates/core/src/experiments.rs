//! Experiment drivers behind the command-line tool.
//!
//! Each driver has a pure `run_*` function returning in-memory results and a
//! `cmd_*` wrapper that writes CSV files plus a JSON metadata sidecar per CSV
//! into the output directory. Replicates run on a rayon pool whose size is
//! capped by `DISTRL_THREADS`; results are ordered by `(γ, n, replicate)`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bellman::{ddp, ddp_observed, BellmanOperator, DdpTrace, ReturnDistributionVector};
use crate::error::{Error, Result};
use crate::inference::{
    variance_statistic, ConfidenceBall, Functional, FunctionalCI, LimitSampler, QuantileDerivative,
    DEFAULT_DENSITY_WINDOW,
};
use crate::mdp::{load_mdp, random_mdp, MdpFile, Policy, TabularMdp};
use crate::measures::{self, CategoricalMeasure, GridWeights, Metric, ReturnGrid};
use crate::seed;

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "DISTRL_THREADS";

/// Where the model comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MdpSource {
    File(PathBuf),
    Random(RandomSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSpec {
    pub states: usize,
    pub actions: usize,
    pub gamma: f64,
    pub seed: u64,
}

impl FromStr for RandomSpec {
    type Err = Error;

    /// `S,A,gamma,seed`.
    fn from_str(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        let bad = || Error::InvalidArgument(format!("expected S,A,gamma,seed, got {text:?}"));
        if parts.len() != 4 {
            return Err(bad());
        }
        Ok(Self {
            states: parts[0].parse().map_err(|_| bad())?,
            actions: parts[1].parse().map_err(|_| bad())?,
            gamma: parts[2].parse().map_err(|_| bad())?,
            seed: parts[3].parse().map_err(|_| bad())?,
        })
    }
}

/// Transition samples per state-action pair; `Infinite` uses the true kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SampleSize {
    Finite(u64),
    Infinite,
}

impl fmt::Display for SampleSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleSize::Finite(n) => write!(f, "{n}"),
            SampleSize::Infinite => write!(f, "inf"),
        }
    }
}

impl FromStr for SampleSize {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        match text.trim() {
            "inf" | "infinite" => Ok(SampleSize::Infinite),
            other => match other.parse::<u64>() {
                Ok(n) if n > 0 => Ok(SampleSize::Finite(n)),
                _ => Err(Error::InvalidArgument(format!(
                    "sample size must be a positive integer or inf, got {other:?}"
                ))),
            },
        }
    }
}

impl Serialize for SampleSize {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SampleSize::Finite(n) => serializer.serialize_u64(*n),
            SampleSize::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for SampleSize {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(u64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(0) => Err(serde::de::Error::custom("sample size must be positive")),
            Raw::Number(n) => Ok(SampleSize::Finite(n)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Comma-separated list of sample sizes.
pub fn parse_sample_sizes(text: &str) -> Result<Vec<SampleSize>> {
    text.split(',').map(str::parse).collect()
}

/// Comma-separated list of reals.
pub fn parse_reals(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("not a number: {t:?}")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mdp: Option<MdpSource>,
    pub grid_k: usize,
    pub n: Vec<SampleSize>,
    pub reps: usize,
    pub alpha: f64,
    pub mc_draws: usize,
    pub tail_tol: f64,
    pub ddp_tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Discounts to sweep; the model's own discount when absent.
    pub gammas: Option<Vec<f64>>,
    /// State whose return distribution is reported.
    pub state: usize,
    /// Support of a uniform law to measure DDP iterates against.
    pub reference_uniform: Option<(f64, f64)>,
    pub density_window: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mdp: None,
            grid_k: 1000,
            n: vec![SampleSize::Finite(100)],
            reps: 20,
            alpha: 0.05,
            mc_draws: 1000,
            tail_tol: 1e-4,
            ddp_tol: 1e-8,
            max_iters: 10_000,
            seed: 0,
            out: PathBuf::from("out"),
            gammas: None,
            state: 0,
            reference_uniform: None,
            density_window: DEFAULT_DENSITY_WINDOW,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.mdp.is_none() {
            problems.push("an MDP source (file or random) is required".to_string());
        }
        if let Some(MdpSource::Random(r)) = &self.mdp {
            if r.states == 0 || r.actions == 0 {
                problems.push("random MDP needs positive state and action counts".into());
            }
            if !(r.gamma > 0.0 && r.gamma < 1.0) {
                problems.push(format!("gamma = {} must lie in (0, 1)", r.gamma));
            }
        }
        if self.grid_k == 0 {
            problems.push("grid_k must be positive".into());
        }
        if self.n.is_empty() {
            problems.push("at least one sample size is required".into());
        }
        if self.reps == 0 {
            problems.push("reps must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            problems.push(format!("alpha = {} must lie in (0, 1)", self.alpha));
        }
        if self.mc_draws < 2 {
            problems.push("mc_draws must be at least 2".into());
        }
        if !(self.tail_tol > 0.0) || !(self.ddp_tol > 0.0) {
            problems.push("tolerances must be positive".into());
        }
        if self.max_iters == 0 {
            problems.push("max_iters must be positive".into());
        }
        if let Some(gammas) = &self.gammas {
            if gammas.is_empty() || gammas.iter().any(|g| !(*g > 0.0 && *g < 1.0)) {
                problems.push("every gamma must lie in (0, 1)".into());
            }
        }
        if let Some((lo, hi)) = self.reference_uniform {
            if !(lo < hi) {
                problems.push("reference_uniform needs lo < hi".into());
            }
        }
        if self.density_window.is_multiple_of(2) {
            problems.push("density_window must be odd".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }

    /// Loads or generates the model.
    pub fn model(&self) -> Result<(TabularMdp, Policy)> {
        let (mdp, policy) = match &self.mdp {
            Some(MdpSource::File(path)) => load_mdp(path)?,
            Some(MdpSource::Random(r)) => random_mdp(r.states, r.actions, r.gamma, r.seed)?,
            None => return Err(Error::InvalidArgument("no MDP source".into())),
        };
        if self.state >= mdp.num_states() {
            return Err(Error::InvalidArgument(format!(
                "state {} out of range for {} states",
                self.state,
                mdp.num_states()
            )));
        }
        Ok((mdp, policy))
    }

    fn gammas(&self, mdp: &TabularMdp) -> Vec<f64> {
        self.gammas.clone().unwrap_or_else(|| vec![mdp.gamma()])
    }
}

/// Flag values that override a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub mdp: Option<MdpSource>,
    pub grid_k: Option<usize>,
    pub n: Option<Vec<SampleSize>>,
    pub reps: Option<usize>,
    pub alpha: Option<f64>,
    pub mc_draws: Option<usize>,
    pub tail_tol: Option<f64>,
    pub ddp_tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub gammas: Option<Vec<f64>>,
    pub state: Option<usize>,
    pub reference_uniform: Option<(f64, f64)>,
}

impl ConfigOverrides {
    pub fn apply(self, mut config: ExperimentConfig) -> ExperimentConfig {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { config.$field = v; })*
            };
        }
        take!(grid_k, n, reps, alpha, mc_draws, tail_tol, ddp_tol, max_iters, seed, out, state);
        if self.mdp.is_some() {
            config.mdp = self.mdp;
        }
        if self.gammas.is_some() {
            config.gammas = self.gammas;
        }
        if self.reference_uniform.is_some() {
            config.reference_uniform = self.reference_uniform;
        }
        config
    }
}

/// Runs `f` on a pool capped by `DISTRL_THREADS` when it is set.
pub fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    match std::env::var(THREADS_ENV) {
        Ok(value) => {
            let threads: usize = value.trim().parse().ok().filter(|t| *t > 0).ok_or_else(|| {
                Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got {value:?}"))
            })?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            Ok(pool.install(f))
        }
        Err(_) => Ok(f()),
    }
}

fn start_at_zero(grid: ReturnGrid, num_states: usize) -> Result<ReturnDistributionVector> {
    Ok(ReturnDistributionVector::constant(
        num_states,
        &CategoricalMeasure::atom(grid, 0)?,
    ))
}

/// True fixed point of `mdp` under `policy` on a grid with `K = grid_k`.
pub fn true_fixed_point(
    mdp: &TabularMdp,
    policy: &Policy,
    config: &ExperimentConfig,
) -> Result<(BellmanOperator, ReturnDistributionVector, DdpTrace)> {
    let grid = ReturnGrid::new(config.grid_k, mdp.gamma())?;
    let op = BellmanOperator::from_mdp(mdp, policy, grid)?;
    let out = ddp(
        &op,
        &start_at_zero(grid, mdp.num_states())?,
        config.max_iters,
        config.ddp_tol,
    )?;
    Ok((op, out.eta, out.trace))
}

/// One DDP iteration as recorded in the trace file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DdpTraceRow {
    pub iteration: usize,
    pub sup_w1_step: f64,
    pub w1_to_reference: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DdpResult {
    pub converged: bool,
    pub iterations: usize,
    #[serde(skip)]
    pub eta: ReturnDistributionVector,
    #[serde(skip)]
    pub trace: Vec<DdpTraceRow>,
    pub classical_value: Vec<f64>,
    pub means: Vec<f64>,
}

/// DDP on the configured model, with optional distances of `η^(t)(state)`
/// to a uniform reference law.
pub fn run_ddp(config: &ExperimentConfig) -> Result<DdpResult> {
    config.validate()?;
    let (mdp, policy) = config.model()?;
    let grid = ReturnGrid::new(config.grid_k, mdp.gamma())?;
    let op = BellmanOperator::from_mdp(&mdp, &policy, grid)?;
    let reference = match config.reference_uniform {
        Some((lo, hi)) => Some(CategoricalMeasure::from_cdf(grid, |x| {
            ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
        })?),
        None => None,
    };
    let mut distances = Vec::new();
    let out = ddp_observed(
        &op,
        &start_at_zero(grid, mdp.num_states())?,
        config.max_iters,
        config.ddp_tol,
        |_, eta| {
            if let Some(r) = &reference {
                distances.push(measures::w1_weights(&grid, eta.state(config.state), r.weights()));
            }
        },
    )?;
    let trace = out
        .trace
        .steps
        .iter()
        .enumerate()
        .map(|(i, step)| DdpTraceRow {
            iteration: i + 1,
            sup_w1_step: *step,
            w1_to_reference: distances.get(i).copied(),
        })
        .collect();
    Ok(DdpResult {
        converged: out.trace.converged,
        iterations: out.trace.steps.len(),
        means: (0..mdp.num_states()).map(|s| out.eta.measure(s).mean()).collect(),
        classical_value: crate::bellman::classical_value(&mdp, &policy)?,
        eta: out.eta,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRow {
    pub gamma: f64,
    pub n: SampleSize,
    pub replicate: usize,
    pub metric: Metric,
    pub sup_state_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorSummary {
    pub gamma: f64,
    pub n: SampleSize,
    pub metric: Metric,
    pub mean: f64,
    pub std: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeRow {
    pub gamma: f64,
    pub metric: Metric,
    /// Least-squares slope of log mean error against log n.
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTraceRow {
    pub gamma: f64,
    pub n: SampleSize,
    pub replicate: usize,
    pub iteration: usize,
    pub sup_w1_step: f64,
    pub sup_w1_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ConvergenceResult {
    pub rows: Vec<ErrorRow>,
    pub summary: Vec<ErrorSummary>,
    pub slopes: Vec<SlopeRow>,
    pub traces: Vec<ConvergenceTraceRow>,
}

fn sample_tag(n: SampleSize) -> u64 {
    match n {
        SampleSize::Finite(n) => n,
        SampleSize::Infinite => u64::MAX,
    }
}

/// Empirical operator for one replicate, or the true one when `n` is infinite.
fn replicate_operator(op: &BellmanOperator, mdp: &TabularMdp, n: SampleSize, seed: u64) -> Result<BellmanOperator> {
    match n {
        SampleSize::Infinite => Ok(op.clone()),
        SampleSize::Finite(n) => op.with_transition(mdp.sample_transitions(n, seed)?.empirical_transition()),
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Least-squares slope of `y` on `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let (mx, _) = mean_std(x);
    let (my, _) = mean_std(y);
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

/// Empirical DDP error against the true fixed point for every `(γ, n,
/// replicate)`.
pub fn run_convergence(config: &ExperimentConfig) -> Result<ConvergenceResult> {
    config.validate()?;
    let (base, policy) = config.model()?;
    let mut result = ConvergenceResult::default();
    for (gi, &gamma) in config.gammas(&base).iter().enumerate() {
        let mdp = base.with_gamma(gamma)?;
        let (op, truth, _) = true_fixed_point(&mdp, &policy, config)?;
        let grid = op.grid();
        let jobs: Vec<(SampleSize, usize)> = config
            .n
            .iter()
            .flat_map(|&n| {
                let reps = if n == SampleSize::Infinite { 1 } else { config.reps };
                (0..reps).map(move |r| (n, r))
            })
            .collect();
        let outcomes = jobs
            .par_iter()
            .map(|&(n, rep)| -> Result<_> {
                let seed = seed::derive_seed(config.seed, &[gi as u64, sample_tag(n), rep as u64]);
                let op_hat = replicate_operator(&op, &mdp, n, seed)?;
                let mut errors = Vec::new();
                let out = ddp_observed(
                    &op_hat,
                    &start_at_zero(grid, mdp.num_states())?,
                    config.max_iters,
                    config.ddp_tol,
                    |_, eta| {
                        errors.push(eta.sup_distance(&truth, Metric::W1).unwrap_or(f64::NAN));
                    },
                )?;
                let finals = Metric::ALL
                    .iter()
                    .map(|&m| out.eta.sup_distance(&truth, m))
                    .collect::<Result<Vec<_>>>()?;
                let trace = out
                    .trace
                    .steps
                    .iter()
                    .zip(&errors)
                    .enumerate()
                    .map(|(i, (step, err))| ConvergenceTraceRow {
                        gamma,
                        n,
                        replicate: rep,
                        iteration: i + 1,
                        sup_w1_step: *step,
                        sup_w1_error: *err,
                    })
                    .collect::<Vec<_>>();
                Ok((n, rep, finals, trace))
            })
            .collect::<Result<Vec<_>>>()?;
        for (n, rep, finals, trace) in outcomes {
            for (metric, error) in Metric::ALL.iter().zip(finals) {
                result.rows.push(ErrorRow {
                    gamma,
                    n,
                    replicate: rep,
                    metric: *metric,
                    sup_state_error: error,
                });
            }
            result.traces.extend(trace);
        }
        for metric in Metric::ALL {
            let mut log_n = Vec::new();
            let mut log_err = Vec::new();
            for &n in &config.n {
                let errors: Vec<f64> = result
                    .rows
                    .iter()
                    .filter(|r| r.gamma == gamma && r.n == n && r.metric == metric)
                    .map(|r| r.sup_state_error)
                    .collect();
                let (mean, std) = mean_std(&errors);
                result.summary.push(ErrorSummary {
                    gamma,
                    n,
                    metric,
                    mean,
                    std,
                    replicates: errors.len(),
                });
                if let SampleSize::Finite(count) = n {
                    log_n.push((count as f64).ln());
                    log_err.push(mean.ln());
                }
            }
            if log_n.len() >= 2 {
                result.slopes.push(SlopeRow {
                    gamma,
                    metric,
                    slope: fit_slope(&log_n, &log_err),
                });
            }
        }
    }
    Ok(result)
}

/// What a coverage row refers to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoverageTarget {
    Ball(Metric),
    Functional(Functional),
}

impl CoverageTarget {
    pub const ALL: [CoverageTarget; 6] = [
        CoverageTarget::Ball(Metric::W1),
        CoverageTarget::Ball(Metric::Ks),
        CoverageTarget::Ball(Metric::Tv),
        CoverageTarget::Functional(Functional::Variance),
        CoverageTarget::Functional(Functional::Quantile { p: 0.1 }),
        CoverageTarget::Functional(Functional::Quantile { p: 0.9 }),
    ];

    pub fn label(&self) -> String {
        match self {
            CoverageTarget::Ball(m) => format!("{m}_ball"),
            CoverageTarget::Functional(f) => f.label(),
        }
    }
}

impl Serialize for CoverageTarget {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRow {
    pub target: CoverageTarget,
    pub gamma: f64,
    pub n: SampleSize,
    pub replicate: usize,
    pub covered: bool,
    /// Ball radius or interval width.
    pub size: f64,
    /// Why no set was built (e.g. a degenerate quantile density).
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageSummary {
    pub target: CoverageTarget,
    pub gamma: f64,
    pub n: SampleSize,
    pub coverage: f64,
    pub mean_size: f64,
    pub std_size: f64,
    pub replicates: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Default)]
pub struct CoverageResult {
    pub rows: Vec<CoverageRow>,
    pub summary: Vec<CoverageSummary>,
}

impl CoverageResult {
    pub fn find(&self, target: CoverageTarget, n: SampleSize) -> Option<&CoverageSummary> {
        self.summary.iter().find(|s| s.target == target && s.n == n)
    }
}

/// Per-draw statistics shared by every set built in one replicate.
struct DrawStats {
    norms: [f64; 3],
    variance: f64,
    quantiles: [Option<f64>; 2],
}

#[allow(clippy::too_many_arguments)]
fn coverage_replicate(
    config: &ExperimentConfig,
    mdp: &TabularMdp,
    op: &BellmanOperator,
    truth: &CategoricalMeasure,
    gamma: f64,
    n: SampleSize,
    rep: usize,
    seed: u64,
) -> Result<Vec<CoverageRow>> {
    let count = match n {
        SampleSize::Finite(count) => count,
        SampleSize::Infinite => {
            return Err(Error::InvalidArgument("coverage needs finite sample sizes".into()));
        }
    };
    let grid = op.grid();
    let op_hat = replicate_operator(op, mdp, n, seed)?;
    let eta_hat = ddp(
        &op_hat,
        &start_at_zero(grid, mdp.num_states())?,
        config.max_iters,
        config.ddp_tol,
    )?
    .eta;
    let center = eta_hat.measure(config.state);
    let sampler = LimitSampler::new(&op_hat, &eta_hat, config.tail_tol)?;
    let quantiles = [0.1, 0.9].map(|p| QuantileDerivative::new(&center, p, config.density_window));
    let mean = center.mean();
    let draw_seed = seed::derive_seed(seed, &[u64::MAX]);
    let stats = sampler.map_draws(config.state, config.mc_draws, draw_seed, |d| DrawStats {
        norms: Metric::ALL.map(|m| measures::signed_norm_weights(&grid, d, m)),
        variance: variance_statistic(&grid, d, mean),
        quantiles: [0, 1].map(|i| quantiles[i].as_ref().ok().map(|q| q.statistic(d))),
    })?;
    let row = |target, covered, size, failure| CoverageRow {
        target,
        gamma,
        n,
        replicate: rep,
        covered,
        size,
        failure,
    };
    let mut rows = Vec::new();
    for (i, metric) in Metric::ALL.iter().enumerate() {
        let norms: Vec<f64> = stats.iter().map(|s| s.norms[i]).collect();
        let ball = ConfidenceBall::from_norms(center.clone(), *metric, config.alpha, config.state, count, &norms)?;
        rows.push(row(
            CoverageTarget::Ball(*metric),
            ball.contains(truth)?,
            ball.radius,
            None,
        ));
    }
    let variance: Vec<f64> = stats.iter().map(|s| s.variance).collect();
    let ci = FunctionalCI::from_statistics(center.variance(), Functional::Variance, config.alpha, count, &variance)?;
    rows.push(row(
        CoverageTarget::Functional(Functional::Variance),
        ci.contains(truth.variance()),
        ci.width(),
        None,
    ));
    for (i, p) in [0.1, 0.9].into_iter().enumerate() {
        let target = CoverageTarget::Functional(Functional::Quantile { p });
        match &quantiles[i] {
            Ok(q) => {
                let draws: Vec<f64> = stats.iter().filter_map(|s| s.quantiles[i]).collect();
                let ci =
                    FunctionalCI::from_statistics(q.quantile, Functional::Quantile { p }, config.alpha, count, &draws)?;
                rows.push(row(target, ci.contains(truth.quantile(p)), ci.width(), None));
            }
            Err(e) => rows.push(row(target, false, f64::NAN, Some(e.to_string()))),
        }
    }
    Ok(rows)
}

/// Empirical coverage of confidence balls and functional intervals for
/// `η(state)` over replicated generative datasets.
pub fn run_coverage(config: &ExperimentConfig) -> Result<CoverageResult> {
    config.validate()?;
    if config.n.contains(&SampleSize::Infinite) {
        return Err(Error::InvalidArgument("coverage needs finite sample sizes".into()));
    }
    let (base, policy) = config.model()?;
    let mut result = CoverageResult::default();
    for (gi, &gamma) in config.gammas(&base).iter().enumerate() {
        let mdp = base.with_gamma(gamma)?;
        let (op, truth, _) = true_fixed_point(&mdp, &policy, config)?;
        let truth = truth.measure(config.state);
        let jobs: Vec<(SampleSize, usize)> = config
            .n
            .iter()
            .flat_map(|&n| (0..config.reps).map(move |r| (n, r)))
            .collect();
        let rows = jobs
            .par_iter()
            .map(|&(n, rep)| {
                let seed = seed::derive_seed(config.seed, &[gi as u64, sample_tag(n), rep as u64]);
                coverage_replicate(config, &mdp, &op, &truth, gamma, n, rep, seed)
            })
            .collect::<Result<Vec<_>>>()?;
        let rows: Vec<CoverageRow> = rows.into_iter().flatten().collect();
        for &n in &config.n {
            for target in CoverageTarget::ALL {
                let selected: Vec<&CoverageRow> = rows.iter().filter(|r| r.n == n && r.target == target).collect();
                let sizes: Vec<f64> = selected
                    .iter()
                    .filter(|r| r.failure.is_none())
                    .map(|r| r.size)
                    .collect();
                let (mean_size, std_size) = if sizes.is_empty() {
                    (f64::NAN, f64::NAN)
                } else {
                    mean_std(&sizes)
                };
                result.summary.push(CoverageSummary {
                    target,
                    gamma,
                    n,
                    coverage: selected.iter().filter(|r| r.covered).count() as f64 / selected.len() as f64,
                    mean_size,
                    std_size,
                    replicates: selected.len(),
                    failures: selected.len() - sizes.len(),
                });
            }
        }
        result.rows.extend(rows);
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub path: PathBuf,
    pub valid: bool,
    pub problems: Vec<String>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.valid {
            write!(f, "{}: valid", self.path.display())
        } else {
            writeln!(f, "{}: invalid", self.path.display())?;
            for p in &self.problems {
                writeln!(f, "  - {p}")?;
            }
            Ok(())
        }
    }
}

/// Parses a model file and lists every invariant violation.
pub fn cmd_validate(path: impl AsRef<Path>) -> Result<ValidationReport> {
    let path = path.as_ref().to_path_buf();
    let text = fs::read_to_string(&path)?;
    let problems = match MdpFile::parse(&text, &path) {
        Ok(file) => file.problems(),
        Err(e) => vec![e.to_string()],
    };
    Ok(ValidationReport {
        valid: problems.is_empty(),
        path,
        problems,
    })
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'a str,
    file: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    extra: Option<serde_json::Value>,
}

fn write_csv<T: Serialize>(
    dir: &Path,
    name: &str,
    command: &str,
    config: &ExperimentConfig,
    rows: &[T],
    extra: Option<serde_json::Value>,
) -> Result<PathBuf> {
    let path = dir.join(format!("{name}.csv"));
    let mut writer = csv::Writer::from_path(&path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    let meta = Metadata {
        command,
        file: &format!("{name}.csv"),
        version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        config,
        extra,
    };
    fs::write(
        dir.join(format!("{name}.meta.json")),
        serde_json::to_string_pretty(&meta)? + "\n",
    )?;
    Ok(path)
}

#[derive(Serialize)]
struct WeightRow {
    state: usize,
    index: usize,
    atom: f64,
    weight: f64,
}

/// Writes `fixed_point.csv` and `ddp_trace.csv`.
pub fn cmd_ddp(config: &ExperimentConfig) -> Result<DdpResult> {
    let result = with_thread_cap(|| run_ddp(config))??;
    fs::create_dir_all(&config.out)?;
    let grid = result.eta.grid();
    let weights: Vec<WeightRow> = (0..result.eta.num_states())
        .flat_map(|s| {
            result.eta.state(s).iter().enumerate().map(move |(k, w)| WeightRow {
                state: s,
                index: k,
                atom: grid.atom(k),
                weight: *w,
            })
        })
        .collect();
    let summary = serde_json::to_value(&result)?;
    write_csv(
        &config.out,
        "fixed_point",
        "ddp",
        config,
        &weights,
        Some(summary.clone()),
    )?;
    write_csv(&config.out, "ddp_trace", "ddp", config, &result.trace, Some(summary))?;
    Ok(result)
}

/// Writes `convergence.csv`, `convergence_summary.csv`,
/// `convergence_slopes.csv` and `convergence_traces.csv`.
pub fn cmd_convergence(config: &ExperimentConfig) -> Result<ConvergenceResult> {
    let result = with_thread_cap(|| run_convergence(config))??;
    fs::create_dir_all(&config.out)?;
    write_csv(&config.out, "convergence", "convergence", config, &result.rows, None)?;
    write_csv(
        &config.out,
        "convergence_summary",
        "convergence",
        config,
        &result.summary,
        None,
    )?;
    write_csv(
        &config.out,
        "convergence_slopes",
        "convergence",
        config,
        &result.slopes,
        None,
    )?;
    write_csv(
        &config.out,
        "convergence_traces",
        "convergence",
        config,
        &result.traces,
        None,
    )?;
    Ok(result)
}

/// Writes `coverage.csv` (per replicate) and `coverage_summary.csv`.
pub fn cmd_coverage(config: &ExperimentConfig) -> Result<CoverageResult> {
    let result = with_thread_cap(|| run_coverage(config))??;
    fs::create_dir_all(&config.out)?;
    write_csv(&config.out, "coverage", "coverage", config, &result.rows, None)?;
    write_csv(
        &config.out,
        "coverage_summary",
        "coverage",
        config,
        &result.summary,
        None,
    )?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parsing_helpers() {
        assert_eq!(
            parse_sample_sizes("10, 100,inf").unwrap(),
            vec![SampleSize::Finite(10), SampleSize::Finite(100), SampleSize::Infinite]
        );
        assert!(parse_sample_sizes("0").is_err());
        let r: RandomSpec = "5,2,0.9,7".parse().unwrap();
        assert_eq!((r.states, r.actions, r.gamma, r.seed), (5, 2, 0.9, 7));
        assert!("5,2,0.9".parse::<RandomSpec>().is_err());
        assert_eq!(parse_reals("0,2").unwrap(), vec![0.0, 2.0]);
    }

    #[test]
    fn config_file_and_overrides() {
        let json = r#"{"mdp": {"random": {"states": 3, "actions": 2, "gamma": 0.8, "seed": 1}},
                       "n": [10, "inf"], "reps": 3}"#;
        let config: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert_eq!(config.n, vec![SampleSize::Finite(10), SampleSize::Infinite]);
        assert_eq!(config.grid_k, 1000);
        let config = ConfigOverrides {
            reps: Some(5),
            grid_k: Some(50),
            ..Default::default()
        }
        .apply(config);
        assert_eq!((config.reps, config.grid_k), (5, 50));
        config.validate().unwrap();
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
        assert!(ExperimentConfig {
            alpha: 1.5,
            ..config.clone()
        }
        .validate()
        .is_err());
        assert!(ExperimentConfig::default().validate().is_err());
    }

    #[test]
    fn slope_of_exact_power_law() {
        let x: Vec<f64> = [10.0_f64, 100.0, 1000.0].iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        assert!((fit_slope(&x, &y) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn infinite_samples_give_numerical_error_only() {
        let config = ExperimentConfig {
            mdp: Some(MdpSource::Random(RandomSpec {
                states: 3,
                actions: 2,
                gamma: 0.8,
                seed: 2,
            })),
            grid_k: 200,
            n: vec![SampleSize::Infinite, SampleSize::Finite(50)],
            reps: 2,
            ..ExperimentConfig::default()
        };
        let out = run_convergence(&config).unwrap();
        let delta = ReturnGrid::new(200, 0.8).unwrap().spacing();
        for row in out.rows.iter().filter(|r| r.n == SampleSize::Infinite) {
            assert!(row.sup_state_error <= 2.0 * delta, "{row:?}");
        }
        assert_eq!(out.rows.len(), 3 * 3);
    }
}
