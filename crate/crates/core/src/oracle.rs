//! Independent ground truth: Monte-Carlo trajectory rollouts compared against
//! distributional dynamic programming under an explicit error budget.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::bellman::{ddp, BellmanOperator, ReturnDistributionVector};
use crate::error::{Error, Result};
use crate::mdp::{Policy, TabularMdp};
use crate::measures::{self, CategoricalMeasure, GridWeights, ReturnGrid};
use crate::seed;

/// Trajectories per random stream; streams are keyed by block index.
const BLOCK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RolloutConfig {
    pub horizon: usize,
    pub num_trajectories: usize,
    pub seed: u64,
}

impl RolloutConfig {
    /// `γ^H / (1-γ)`, the largest possible contribution of the dropped tail.
    pub fn tail_bound(&self, gamma: f64) -> f64 {
        gamma.powi(self.horizon as i32) / (1.0 - gamma)
    }

    fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.num_trajectories == 0 {
            return Err(Error::InvalidArgument(
                "horizon and trajectory count must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Smallest `H` with `γ^H/(1-γ) <= Δ`.
pub fn default_horizon(grid: &ReturnGrid) -> usize {
    let gamma = grid.gamma();
    ((grid.spacing() * (1.0 - gamma)).ln() / gamma.ln()).ceil().max(1.0) as usize
}

/// Truncated discounted returns `Σ_{t<H} γ^t R_t` from `s0`.
pub fn sample_returns(mdp: &TabularMdp, policy: &Policy, s0: usize, config: &RolloutConfig) -> Result<Vec<f64>> {
    config.validate()?;
    if s0 >= mdp.num_states() {
        return Err(Error::InvalidArgument(format!("start state {s0} out of range")));
    }
    let gamma = mdp.gamma();
    let blocks = config.num_trajectories.div_ceil(BLOCK);
    let chunks: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = seed::rng(config.seed, &[b as u64]);
            let count = BLOCK.min(config.num_trajectories - b * BLOCK);
            (0..count)
                .map(|_| {
                    let mut state = s0;
                    let mut discount = 1.0;
                    let mut total = 0.0;
                    for _ in 0..config.horizon {
                        let action = policy.sample_action(state, &mut rng);
                        total += discount * mdp.reward(state, action).sample(&mut rng);
                        state = crate::mdp::sample_index(mdp.transition().row(state, action), &mut rng);
                        discount *= gamma;
                    }
                    total
                })
                .collect()
        })
        .collect();
    Ok(chunks.concat())
}

/// Projects sample values onto the grid, splitting each between its
/// bracketing atoms.
pub fn project_samples(grid: ReturnGrid, samples: &[f64]) -> Result<CategoricalMeasure> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let mut weights = vec![0.0; grid.num_atoms()];
    for &x in samples {
        if !(x >= 0.0) {
            return Err(Error::OutOfRange {
                value: x,
                lo: 0.0,
                hi: grid.upper(),
            });
        }
        let (k, frac) = grid.bracket(x);
        weights[k] += 1.0 - frac;
        if frac > 0.0 {
            weights[k + 1] += frac;
        }
    }
    CategoricalMeasure::from_unnormalized(grid, weights)
}

/// Empirical return distribution of `s0`, projected onto `grid`.
pub fn rollout_returns(
    mdp: &TabularMdp,
    policy: &Policy,
    s0: usize,
    config: &RolloutConfig,
    grid: ReturnGrid,
) -> Result<CategoricalMeasure> {
    project_samples(grid, &sample_returns(mdp, policy, s0, config)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorBudget {
    /// `3Δ Σ_k sqrt(F(x_k)(1-F(x_k))/N)`, three times the expected W1 error
    /// of an N-sample empirical CDF.
    pub monte_carlo: f64,
    pub truncation: f64,
    pub ddp: f64,
    pub discretization: f64,
    pub total: f64,
}

impl ErrorBudget {
    fn new(reference: &CategoricalMeasure, trajectories: usize, truncation: f64, ddp_tol: f64) -> Self {
        let grid = reference.grid();
        let gamma = grid.gamma();
        let delta = grid.spacing();
        let n = trajectories as f64;
        let monte_carlo = 3.0
            * delta
            * reference
                .cdf()
                .values()
                .iter()
                .map(|f| (f.clamp(0.0, 1.0) * (1.0 - f.clamp(0.0, 1.0)) / n).sqrt())
                .sum::<f64>();
        let ddp = ddp_tol * gamma / (1.0 - gamma);
        let discretization = 4.0 * delta;
        Self {
            monte_carlo,
            truncation,
            ddp,
            discretization,
            total: monte_carlo + truncation + ddp + discretization,
        }
    }
}

/// Rollout and DDP estimates of one state's return distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossCheckReport {
    pub state: usize,
    pub w1: f64,
    pub ks: f64,
    pub budget: ErrorBudget,
    pub within_budget: bool,
    pub ddp_converged: bool,
    pub rollout_mean: f64,
    pub ddp_mean: f64,
    pub max_index: usize,
    pub gamma: f64,
    pub rollout: Vec<f64>,
    pub ddp: Vec<f64>,
}

impl fmt::Display for CrossCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "state {}: w1 {:.4e} against budget {:.4e} (ks {:.4e}, means {:.6} vs {:.6})",
            self.state, self.w1, self.budget.total, self.ks, self.rollout_mean, self.ddp_mean
        )?;
        if let Ok(json) = serde_json::to_string(self) {
            write!(f, "; report {json}")?;
        }
        Ok(())
    }
}

/// DDP controls for the cross-check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DdpSettings {
    pub max_index: usize,
    pub tol: f64,
    pub max_iters: usize,
}

/// Rolls out `rollout_mdp` and runs DDP on `ddp_mdp`, comparing the two at
/// `state` on the DDP grid. Fails with [`Error::Discrepancy`] when W1 exceeds
/// the budget.
pub fn cross_check(
    rollout_mdp: &TabularMdp,
    ddp_mdp: &TabularMdp,
    policy: &Policy,
    state: usize,
    config: &RolloutConfig,
    settings: &DdpSettings,
) -> Result<CrossCheckReport> {
    let grid = ReturnGrid::new(settings.max_index, ddp_mdp.gamma())?;
    let op = BellmanOperator::from_mdp(ddp_mdp, policy, grid)?;
    let eta0 = ReturnDistributionVector::constant(ddp_mdp.num_states(), &CategoricalMeasure::atom(grid, 0)?);
    let fixed = ddp(&op, &eta0, settings.max_iters, settings.tol)?;
    let reference = fixed.eta.measure(state);
    let rollout = rollout_returns(rollout_mdp, policy, state, config, grid)?;
    let w1 = measures::w1(&rollout, &reference)?;
    let ks = measures::ks(&rollout, &reference)?;
    let budget = ErrorBudget::new(
        &reference,
        config.num_trajectories,
        config.tail_bound(rollout_mdp.gamma()),
        settings.tol,
    );
    let report = CrossCheckReport {
        state,
        w1,
        ks,
        within_budget: w1 <= budget.total && fixed.trace.converged,
        budget,
        ddp_converged: fixed.trace.converged,
        rollout_mean: rollout.mean(),
        ddp_mean: reference.mean(),
        max_index: settings.max_index,
        gamma: ddp_mdp.gamma(),
        rollout: rollout.weights().to_vec(),
        ddp: reference.weights().to_vec(),
    };
    if report.within_budget {
        Ok(report)
    } else {
        Err(Error::Discrepancy(Box::new(report)))
    }
}

/// [`cross_check`] with both pipelines on the same model.
pub fn rollout_vs_ddp(
    mdp: &TabularMdp,
    policy: &Policy,
    state: usize,
    config: &RolloutConfig,
    settings: &DdpSettings,
) -> Result<CrossCheckReport> {
    cross_check(mdp, mdp, policy, state, config, settings)
}
