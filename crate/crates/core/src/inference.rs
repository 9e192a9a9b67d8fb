//! Asymptotic inference for return distributions.
//!
//! The scaled estimation error `√n (η̂ - η)` converges to `(I - T)^{-1} G`,
//! where `G(s) = Σ_a π(a|s) Σ_{s'} Z_{s,a,s'} · (reward-mixed pushforward of
//! η(s'))` and `Z_{s,a,·}` is a centered Gaussian with multinomial covariance
//! `diag(p) - p pᵀ`. Quantiles of functionals of that limit, estimated by
//! Monte Carlo with `P̂` and `η̂` plugged in, give confidence balls in W1, KS
//! and TV and delta-method intervals for moments, quantiles and the uniform
//! advantage.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::bellman::{neumann_flat, neumann_inverse, BellmanOperator, ReturnDistributionVector, SignedVector};
use crate::error::{Error, Result};
use crate::mdp::TransitionTensor;
use crate::measures::{self, CategoricalMeasure, GridWeights, Metric, ReturnGrid};
use crate::seed;

/// Default number of Monte-Carlo draws.
pub const DEFAULT_DRAWS: usize = 1000;
/// Default moving-average window for quantile densities.
pub const DEFAULT_DENSITY_WINDOW: usize = 21;
/// Densities at or below this many grid-mass units per unit length are
/// refused by quantile intervals.
pub const DENSITY_FLOOR_MASS: f64 = 1e-6;

/// One draw of `Z`, an `S × A × S` tensor with rows summing to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPerturbation {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl GaussianPerturbation {
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.values[start..start + self.num_states]
    }

    pub fn get(&self, s: usize, a: usize, next: usize) -> f64 {
        self.row(s, a)[next]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|z| c * z).collect(),
            ..self.clone()
        }
    }
}

/// Draws `Z` with the plug-in covariance `diag(p̂) - p̂ p̂ᵀ` per row.
pub fn sample_z(p_hat: &TransitionTensor, seed: u64) -> GaussianPerturbation {
    sample_z_with(p_hat, &mut seed::rng(seed, &[]))
}

/// [`sample_z`] from an existing stream: `S` normals per state-action pair,
/// in row-major order.
pub fn sample_z_with(p_hat: &TransitionTensor, rng: &mut seed::Rng) -> GaussianPerturbation {
    let (s_count, a_count) = (p_hat.num_states(), p_hat.num_actions());
    let mut values = Vec::with_capacity(s_count * a_count * s_count);
    let mut scaled = vec![0.0; s_count];
    for s in 0..s_count {
        for a in 0..a_count {
            let p = p_hat.row(s, a);
            let mut total = 0.0;
            for (x, &pi) in scaled.iter_mut().zip(p) {
                let w: f64 = StandardNormal.sample(rng);
                *x = pi.sqrt() * w;
                total += *x;
            }
            values.extend(scaled.iter().zip(p).map(|(x, pi)| x - pi * total));
        }
    }
    GaussianPerturbation {
        num_states: s_count,
        num_actions: a_count,
        values,
    }
}

/// `Ĝ(s) = Σ_a π(a|s) Σ_{s'} Z_{s,a,s'} · (reward-mixed pushforward of η(s'))`.
pub fn build_g(z: &GaussianPerturbation, eta: &ReturnDistributionVector, op: &BellmanOperator) -> Result<SignedVector> {
    let (s_count, a_count) = (op.num_states(), op.num_actions());
    if z.num_states != s_count || z.num_actions != a_count || eta.num_states() != s_count {
        return Err(Error::ShapeMismatch(format!(
            "perturbation {}x{}, distributions for {} states, operator {}x{}",
            z.num_states,
            z.num_actions,
            eta.num_states(),
            s_count,
            a_count
        )));
    }
    let grid = op.grid();
    grid.check_same(&eta.grid())?;
    let n = grid.num_atoms();
    let mut out = vec![0.0; s_count * n];
    let mut mixed = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    for s in 0..s_count {
        for a in 0..a_count {
            let pi = op.policy().prob(s, a);
            if pi == 0.0 {
                continue;
            }
            mixed.fill(0.0);
            for (next, &zv) in z.row(s, a).iter().enumerate() {
                if zv == 0.0 {
                    continue;
                }
                for (m, w) in mixed.iter_mut().zip(eta.state(next)) {
                    *m += zv * w;
                }
            }
            op.add_reward_pushforward(s, a, pi, &mixed, &mut scratch, &mut out[s * n..(s + 1) * n]);
        }
    }
    Ok(SignedVector::from_flat_unchecked(grid, s_count, out))
}

/// The `⌈p·m⌉`-th smallest value (1-based), i.e. `inf{t : F_m(t) >= p}`.
pub fn empirical_quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("no values".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::OutOfRange {
            value: p,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let rank = ((p * m as f64) - 1e-9).ceil().clamp(1.0, m as f64) as usize;
    Ok(sorted[rank - 1])
}

/// Monte-Carlo controls shared by every interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McSettings {
    pub draws: usize,
    pub tail_tol: f64,
    pub seed: u64,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            draws: DEFAULT_DRAWS,
            tail_tol: 1e-6,
            seed: 0,
        }
    }
}

impl McSettings {
    fn validate(&self) -> Result<()> {
        if self.draws < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 draws, got {}",
                self.draws
            )));
        }
        if !(self.tail_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tail tolerance must be positive, got {}",
                self.tail_tol
            )));
        }
        Ok(())
    }
}

/// Reference plug-in quantile of `‖((I - T̂)^{-1} Ĝ)(state)‖`: every draw
/// samples `Z`, builds `Ĝ` and runs a full Neumann inverse.
#[allow(clippy::too_many_arguments)]
pub fn plug_in_quantile(
    op: &BellmanOperator,
    eta_hat: &ReturnDistributionVector,
    state: usize,
    kind: Metric,
    p: f64,
    draws: usize,
    tail_tol: f64,
    seed: u64,
) -> Result<f64> {
    McSettings { draws, tail_tol, seed }.validate()?;
    check_state(state, op.num_states())?;
    let grid = op.grid();
    let norms = (0..draws)
        .into_par_iter()
        .map(|draw| {
            let z = sample_z(op.transition(), seed::derive_seed(seed, &[draw as u64]));
            let g = build_g(&z, eta_hat, op)?;
            let d = neumann_inverse(op, &g, tail_tol)?.value;
            Ok(measures::signed_norm_weights(&grid, d.state(state), kind))
        })
        .collect::<Result<Vec<f64>>>()?;
    empirical_quantile(&norms, p)
}

fn check_state(state: usize, num_states: usize) -> Result<()> {
    if state >= num_states {
        return Err(Error::InvalidArgument(format!(
            "state {state} out of range for {num_states} states"
        )));
    }
    Ok(())
}

/// Fast sampler of `D = (I - T̂)^{-1} Ĝ`.
///
/// `Ĝ` is linear in `Z`, and every row of `Z` sums to zero, so writing
/// `Z_{s,a,r}` for a reference next state `r` in terms of the others gives
/// `Ĝ = Σ_{s,a} Σ_{s' ≠ r} Z_{s,a,s'} · e_s ⊗ π(a|s) M_{s,a}(η̂(s') - η̂(r))`
/// with zero-total basis vectors. Their Neumann inverses are computed once;
/// each draw is then a linear combination. Next states with `P̂ = 0` carry
/// `Z ≡ 0` and are skipped. Draws use the same random stream as
/// [`sample_z`], so the two paths agree draw by draw up to the tail bound.
#[derive(Debug, Clone)]
pub struct LimitSampler {
    grid: ReturnGrid,
    num_states: usize,
    transition: TransitionTensor,
    /// `(row offset into Z, next state, reference state)` per basis vector.
    terms: Vec<(usize, usize, usize)>,
    /// Neumann inverses of the basis vectors, flattened state-major.
    basis: Vec<Vec<f64>>,
    depth: usize,
}

impl LimitSampler {
    /// `tail_tol` bounds the Neumann tail of each basis inverse after
    /// division by the number of basis vectors.
    pub fn new(op: &BellmanOperator, eta_hat: &ReturnDistributionVector, tail_tol: f64) -> Result<Self> {
        if !(tail_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tail tolerance must be positive, got {tail_tol}"
            )));
        }
        let grid = op.grid();
        grid.check_same(&eta_hat.grid())?;
        let (s_count, a_count) = (op.num_states(), op.num_actions());
        if eta_hat.num_states() != s_count {
            return Err(Error::ShapeMismatch(
                "distribution vector and operator state counts differ".into(),
            ));
        }
        let n = grid.num_atoms();
        let transition = op.transition().clone();
        let mut terms = Vec::new();
        let mut raw = Vec::new();
        let mut diff = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        for s in 0..s_count {
            for a in 0..a_count {
                let pi = op.policy().prob(s, a);
                let row = transition.row(s, a);
                let support: Vec<usize> = (0..s_count).filter(|&j| row[j] > 0.0).collect();
                if pi == 0.0 || support.len() < 2 {
                    continue;
                }
                let reference = support[0];
                for &next in &support[1..] {
                    for ((d, x), y) in diff.iter_mut().zip(eta_hat.state(next)).zip(eta_hat.state(reference)) {
                        *d = x - y;
                    }
                    let mut v = vec![0.0; s_count * n];
                    op.add_reward_pushforward(s, a, pi, &diff, &mut scratch, &mut v[s * n..(s + 1) * n]);
                    terms.push(((s * a_count + a) * s_count, next, reference));
                    raw.push(v);
                }
            }
        }
        let count = raw.len().max(1) as f64;
        let norm = raw
            .iter()
            .map(|v| {
                v.chunks(n)
                    .map(|w| measures::signed_norm_weights(&grid, w, Metric::W1))
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        let depth = if norm == 0.0 {
            0
        } else {
            crate::bellman::truncation_depth(op.gamma(), norm, tail_tol / count)
        };
        let basis = raw.par_iter().map(|v| neumann_flat(op, v, depth)).collect();
        Ok(Self {
            grid,
            num_states: s_count,
            transition,
            terms,
            basis,
            depth,
        })
    }

    pub fn grid(&self) -> ReturnGrid {
        self.grid
    }

    pub fn num_basis(&self) -> usize {
        self.basis.len()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// `D(state)` for the draw whose `Z` is `sample_z(P̂, draw_seed)`.
    pub fn draw_state(&self, state: usize, draw_seed: u64) -> Vec<f64> {
        let z = sample_z(&self.transition, draw_seed);
        self.combine_state(state, &z)
    }

    /// `D(state)` for a given perturbation.
    pub fn combine_state(&self, state: usize, z: &GaussianPerturbation) -> Vec<f64> {
        let n = self.grid.num_atoms();
        let mut out = vec![0.0; n];
        for ((offset, next, _), v) in self.terms.iter().zip(&self.basis) {
            let coef = z.values[offset + next];
            if coef == 0.0 {
                continue;
            }
            for (o, x) in out.iter_mut().zip(&v[state * n..(state + 1) * n]) {
                *o += coef * x;
            }
        }
        out
    }

    /// Applies `f` to `D(state)` for draws `0..draws`, in draw order.
    pub fn map_draws<T, F>(&self, state: usize, draws: usize, seed: u64, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&[f64]) -> T + Sync,
    {
        check_state(state, self.num_states)?;
        Ok((0..draws)
            .into_par_iter()
            .map(|draw| f(&self.draw_state(state, seed::derive_seed(seed, &[draw as u64]))))
            .collect())
    }

    /// Plug-in quantile of `‖D(state)‖` in the given metric.
    pub fn norm_quantile(&self, state: usize, kind: Metric, p: f64, draws: usize, seed: u64) -> Result<f64> {
        let grid = self.grid;
        let norms = self.map_draws(state, draws, seed, |d| measures::signed_norm_weights(&grid, d, kind))?;
        empirical_quantile(&norms, p)
    }
}

/// A closed ball around `η̂(state)` of radius `ẑ(1-α)/√n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceBall {
    #[serde(skip)]
    pub center: CategoricalMeasure,
    pub radius: f64,
    pub kind: Metric,
    pub alpha: f64,
    pub state: usize,
    pub n: u64,
}

impl ConfidenceBall {
    /// Builds the ball from Monte-Carlo draws of the limit norm.
    pub fn from_norms(
        center: CategoricalMeasure,
        kind: Metric,
        alpha: f64,
        state: usize,
        n: u64,
        norms: &[f64],
    ) -> Result<Self> {
        check_alpha(alpha)?;
        check_n(n)?;
        let radius = empirical_quantile(norms, 1.0 - alpha)? / (n as f64).sqrt();
        Ok(Self {
            center,
            radius,
            kind,
            alpha,
            state,
            n,
        })
    }

    pub fn contains(&self, candidate: &CategoricalMeasure) -> Result<bool> {
        Ok(measures::distance(self.kind, &self.center, candidate)? <= self.radius)
    }
}

pub fn ball_contains(ball: &ConfidenceBall, candidate: &CategoricalMeasure) -> Result<bool> {
    ball.contains(candidate)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            value: alpha,
            lo: 0.0,
            hi: 1.0,
        })
    }
}

fn check_n(n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be positive".into()));
    }
    Ok(())
}

/// Confidence ball for `η(state)` of the given kind.
pub fn confidence_ball(
    eta_hat: &ReturnDistributionVector,
    op: &BellmanOperator,
    state: usize,
    kind: Metric,
    alpha: f64,
    n: u64,
    mc: &McSettings,
) -> Result<ConfidenceBall> {
    mc.validate()?;
    check_alpha(alpha)?;
    let sampler = LimitSampler::new(op, eta_hat, mc.tail_tol)?;
    let grid = op.grid();
    let norms = sampler.map_draws(state, mc.draws, mc.seed, |d| {
        measures::signed_norm_weights(&grid, d, kind)
    })?;
    ConfidenceBall::from_norms(eta_hat.measure(state), kind, alpha, state, n, &norms)
}

/// Which functional an interval covers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "functional", rename_all = "snake_case")]
pub enum Functional {
    Moment { r: u32 },
    Variance,
    Quantile { p: f64 },
    UniformAdvantage,
}

impl Functional {
    pub fn label(&self) -> String {
        match self {
            Functional::Moment { r } => format!("moment_{r}"),
            Functional::Variance => "variance".into(),
            Functional::Quantile { p } => format!("quantile_{p}"),
            Functional::UniformAdvantage => "uniform_advantage".into(),
        }
    }
}

/// `[φ(η̂) + ẑ(α/2)/√n, φ(η̂) + ẑ(1-α/2)/√n]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FunctionalCI {
    pub lower: f64,
    pub upper: f64,
    pub point: f64,
    #[serde(flatten)]
    pub functional: Functional,
    pub alpha: f64,
}

impl FunctionalCI {
    /// Builds the interval from draws of the derivative applied to `D`.
    pub fn from_statistics(point: f64, functional: Functional, alpha: f64, n: u64, stats: &[f64]) -> Result<Self> {
        check_alpha(alpha)?;
        check_n(n)?;
        let root = (n as f64).sqrt();
        let lower = point + empirical_quantile(stats, alpha / 2.0)? / root;
        let upper = point + empirical_quantile(stats, 1.0 - alpha / 2.0)? / root;
        Ok(Self {
            lower,
            upper: upper.max(lower),
            point,
            functional,
            alpha,
        })
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Derivative of the `r`-th moment: `φ_r(D)`.
pub fn moment_statistic(grid: &ReturnGrid, d: &[f64], r: u32) -> f64 {
    measures::moment_weights(grid, d, r)
}

/// Derivative of the variance at `η̂`: `φ₂(D) - 2 φ₁(D) φ₁(η̂)`.
pub fn variance_statistic(grid: &ReturnGrid, d: &[f64], center_mean: f64) -> f64 {
    measures::moment_weights(grid, d, 2) - 2.0 * measures::moment_weights(grid, d, 1) * center_mean
}

/// Derivative of the `p`-quantile at `η̂`: `D ↦ -F_D(q̂)/ĝ(q̂)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileDerivative {
    pub p: f64,
    pub quantile: f64,
    pub index: usize,
    pub density: f64,
}

impl QuantileDerivative {
    /// Fails when the smoothed density at the quantile is at or below the
    /// floor.
    pub fn new(center: &CategoricalMeasure, p: f64, window: usize) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::OutOfRange {
                value: p,
                lo: 0.0,
                hi: 1.0,
            });
        }
        let index = center.quantile_index(p);
        let density = center.density_estimate(window)?[index];
        let floor = DENSITY_FLOOR_MASS / center.grid().spacing();
        if !(density > floor) {
            return Err(Error::DegenerateDensity { density, floor });
        }
        Ok(Self {
            p,
            quantile: center.grid().atom(index),
            index,
            density,
        })
    }

    pub fn statistic(&self, d: &[f64]) -> f64 {
        -d[..=self.index].iter().sum::<f64>() / self.density
    }
}

/// Derivative of `(μ₁, μ₂) ↦ P(G₁ >= G₂)` at `(η̂₁, η̂₂)` applied to
/// `(D₁, D₂)`. The functional is bilinear, so this is
/// `A(D₁, η̂₂) + A(η̂₁, D₂)` on grid weights.
pub fn advantage_statistic(eta1: &[f64], eta2: &[f64], d1: &[f64], d2: &[f64]) -> f64 {
    measures::advantage_weights(d1, eta2) + measures::advantage_weights(eta1, d2)
}

fn sampler_and_center(
    op: &BellmanOperator,
    eta_hat: &ReturnDistributionVector,
    state: usize,
    alpha: f64,
    mc: &McSettings,
) -> Result<(LimitSampler, CategoricalMeasure)> {
    mc.validate()?;
    check_alpha(alpha)?;
    check_state(state, op.num_states())?;
    Ok((LimitSampler::new(op, eta_hat, mc.tail_tol)?, eta_hat.measure(state)))
}

/// Interval for the `r`-th moment of `η(state)`.
pub fn moment_ci(
    op: &BellmanOperator,
    eta_hat: &ReturnDistributionVector,
    state: usize,
    r: u32,
    alpha: f64,
    n: u64,
    mc: &McSettings,
) -> Result<FunctionalCI> {
    if r == 0 {
        return Err(Error::InvalidArgument("moment order must be at least 1".into()));
    }
    let (sampler, center) = sampler_and_center(op, eta_hat, state, alpha, mc)?;
    let grid = op.grid();
    let stats = sampler.map_draws(state, mc.draws, mc.seed, |d| moment_statistic(&grid, d, r))?;
    FunctionalCI::from_statistics(center.moment(r), Functional::Moment { r }, alpha, n, &stats)
}

/// Interval for the variance of `η(state)`.
pub fn variance_ci(
    op: &BellmanOperator,
    eta_hat: &ReturnDistributionVector,
    state: usize,
    alpha: f64,
    n: u64,
    mc: &McSettings,
) -> Result<FunctionalCI> {
    let (sampler, center) = sampler_and_center(op, eta_hat, state, alpha, mc)?;
    let grid = op.grid();
    let mean = center.mean();
    let stats = sampler.map_draws(state, mc.draws, mc.seed, |d| variance_statistic(&grid, d, mean))?;
    FunctionalCI::from_statistics(center.variance(), Functional::Variance, alpha, n, &stats)
}

/// Interval for the `p`-quantile of `η(state)`.
#[allow(clippy::too_many_arguments)]
pub fn quantile_ci(
    op: &BellmanOperator,
    eta_hat: &ReturnDistributionVector,
    state: usize,
    p: f64,
    alpha: f64,
    n: u64,
    window: usize,
    mc: &McSettings,
) -> Result<FunctionalCI> {
    let (sampler, center) = sampler_and_center(op, eta_hat, state, alpha, mc)?;
    let derivative = QuantileDerivative::new(&center, p, window)?;
    let stats = sampler.map_draws(state, mc.draws, mc.seed, |d| derivative.statistic(d))?;
    FunctionalCI::from_statistics(derivative.quantile, Functional::Quantile { p }, alpha, n, &stats)
}

/// Interval for `P(G₁ >= G₂)` from two estimates built on independent data.
/// Draws for the second estimate use a stream derived from `mc.seed`.
#[allow(clippy::too_many_arguments)]
pub fn advantage_ci(
    eta1_hat: &ReturnDistributionVector,
    op1: &BellmanOperator,
    eta2_hat: &ReturnDistributionVector,
    op2: &BellmanOperator,
    state: usize,
    alpha: f64,
    n: u64,
    mc: &McSettings,
) -> Result<FunctionalCI> {
    let (sampler1, center1) = sampler_and_center(op1, eta1_hat, state, alpha, mc)?;
    let (sampler2, center2) = sampler_and_center(op2, eta2_hat, state, alpha, mc)?;
    let point = measures::uniform_advantage(&center1, &center2)?;
    let second_seed = seed::derive_seed(mc.seed, &[u64::MAX]);
    let stats = (0..mc.draws)
        .into_par_iter()
        .map(|draw| {
            let d1 = sampler1.draw_state(state, seed::derive_seed(mc.seed, &[draw as u64]));
            let d2 = sampler2.draw_state(state, seed::derive_seed(second_seed, &[draw as u64]));
            advantage_statistic(center1.weights(), center2.weights(), &d1, &d2)
        })
        .collect::<Vec<_>>();
    FunctionalCI::from_statistics(point, Functional::UniformAdvantage, alpha, n, &stats)
}
