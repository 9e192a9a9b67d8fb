//! Tabular MDPs, policies and the generative model.

use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Binomial, Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::measures::{CategoricalMeasure, GridWeights, ReturnGrid};
use crate::seed;

/// Row-sum tolerance for transition and policy rows.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Law of the immediate reward of one state-action pair, supported on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RewardSpec {
    Dirac {
        c: f64,
    },
    Bernoulli {
        q: f64,
    },
    Discrete {
        atoms: Vec<f64>,
        weights: Vec<f64>,
    },
    /// `N(loc, scale²)` conditioned on `[0, 1]`.
    TruncatedGaussian {
        loc: f64,
        scale: f64,
    },
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `Φ(b) - Φ(a)` for `a <= b`, computed on the tail that keeps precision.
/// Inverse-CDF draw of a standard normal restricted to `[a, b]`, working in
/// the upper tail when the interval lies right of zero.
fn truncated_normal_inverse(a: f64, b: f64, u: f64) -> f64 {
    let sqrt2 = std::f64::consts::SQRT_2;
    if a > 0.0 {
        let (sa, sb) = (0.5 * erfc(a / sqrt2), 0.5 * erfc(b / sqrt2));
        sqrt2 * erfc_inv(2.0 * (sa - u * (sa - sb)))
    } else {
        let (fa, fb) = (0.5 * erfc(-a / sqrt2), 0.5 * erfc(-b / sqrt2));
        -sqrt2 * erfc_inv(2.0 * (fa + u * (fb - fa)))
    }
}

fn normal_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        std_normal_cdf(-a) - std_normal_cdf(-b)
    } else {
        std_normal_cdf(b) - std_normal_cdf(a)
    }
}

impl RewardSpec {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Validation(format!("{name} = {v} must lie in [0, 1]")))
            }
        };
        match self {
            RewardSpec::Dirac { c } => unit("dirac c", *c),
            RewardSpec::Bernoulli { q } => unit("bernoulli q", *q),
            RewardSpec::Discrete { atoms, weights } => {
                if atoms.is_empty() || atoms.len() != weights.len() {
                    return Err(Error::Validation(format!(
                        "discrete reward has {} atoms and {} weights",
                        atoms.len(),
                        weights.len()
                    )));
                }
                for &a in atoms {
                    unit("discrete atom", a)?;
                }
                if weights.iter().any(|w| !(*w >= 0.0)) {
                    return Err(Error::Validation("negative discrete reward weight".into()));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::Validation(format!("discrete reward weights sum to {total}")));
                }
                Ok(())
            }
            RewardSpec::TruncatedGaussian { loc, scale } => {
                if !loc.is_finite() || !(*scale > 0.0) || !scale.is_finite() {
                    return Err(Error::Validation(format!(
                        "truncated gaussian needs finite loc and scale > 0, got ({loc}, {scale})"
                    )));
                }
                if normal_mass(-loc / scale, (1.0 - loc) / scale) <= 0.0 {
                    return Err(Error::Validation(format!(
                        "truncated gaussian ({loc}, {scale}) has no mass on [0, 1]"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Analytic mean of the reward law.
    pub fn mean(&self) -> f64 {
        match self {
            RewardSpec::Dirac { c } => *c,
            RewardSpec::Bernoulli { q } => *q,
            RewardSpec::Discrete { atoms, weights } => atoms.iter().zip(weights).map(|(a, w)| a * w).sum(),
            RewardSpec::TruncatedGaussian { loc, scale } => {
                let a = -loc / scale;
                let b = (1.0 - loc) / scale;
                loc + scale * (std_normal_pdf(a) - std_normal_pdf(b)) / normal_mass(a, b)
            }
        }
    }

    /// Projects the reward law onto the return grid.
    ///
    /// Point masses are split between bracketing atoms (mean preserving); the
    /// truncated Gaussian puts on each atom in `[0, 1]` its probability over
    /// the atom's cell, the last cell running up to 1.
    pub fn discretize(&self, grid: ReturnGrid) -> Result<CategoricalMeasure> {
        self.validate()?;
        let n = grid.num_atoms();
        let mut weights = vec![0.0; n];
        let mut add_point = |value: f64, mass: f64| -> Result<()> {
            let d = CategoricalMeasure::dirac(grid, value)?;
            for (acc, w) in weights.iter_mut().zip(d.weights()) {
                *acc += mass * w;
            }
            Ok(())
        };
        match self {
            RewardSpec::Dirac { c } => add_point(*c, 1.0)?,
            RewardSpec::Bernoulli { q } => {
                add_point(0.0, 1.0 - q)?;
                add_point(1.0, *q)?;
            }
            RewardSpec::Discrete { atoms, weights: ws } => {
                for (a, w) in atoms.iter().zip(ws) {
                    add_point(*a, *w)?;
                }
            }
            RewardSpec::TruncatedGaussian { loc, scale } => {
                let delta = grid.spacing();
                let last = (0..n).take_while(|&k| grid.atom(k) <= 1.0).last().unwrap_or(0);
                for (k, w) in weights.iter_mut().enumerate().take(last + 1) {
                    let lo = (grid.atom(k) - 0.5 * delta).max(0.0);
                    let hi = if k == last {
                        1.0
                    } else {
                        (grid.atom(k) + 0.5 * delta).min(1.0)
                    };
                    *w = normal_mass((lo - loc) / scale, (hi - loc) / scale);
                }
            }
        }
        CategoricalMeasure::from_unnormalized(grid, weights)
    }

    /// Draws one reward.
    pub fn sample(&self, rng: &mut seed::Rng) -> f64 {
        match self {
            RewardSpec::Dirac { c } => *c,
            RewardSpec::Bernoulli { q } => {
                if rng.random::<f64>() < *q {
                    1.0
                } else {
                    0.0
                }
            }
            RewardSpec::Discrete { atoms, weights } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (a, w) in atoms.iter().zip(weights) {
                    acc += w;
                    if u < acc {
                        return *a;
                    }
                }
                *atoms.last().expect("validated non-empty")
            }
            RewardSpec::TruncatedGaussian { loc, scale } => {
                let (a, b) = (-loc / scale, (1.0 - loc) / scale);
                if normal_mass(a, b) < 0.05 {
                    return (loc + scale * truncated_normal_inverse(a, b, rng.random())).clamp(0.0, 1.0);
                }
                loop {
                    let z: f64 = StandardNormal.sample(rng);
                    let x = loc + scale * z;
                    if (0.0..=1.0).contains(&x) {
                        return x;
                    }
                }
            }
        }
    }
}

/// `P[s][a][s']`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTensor {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl TransitionTensor {
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::Validation("MDP needs at least one state and action".into()));
        }
        if probs.len() != num_states * num_actions * num_states {
            return Err(Error::ShapeMismatch(format!(
                "transition tensor has {} entries, expected {}",
                probs.len(),
                num_states * num_actions * num_states
            )));
        }
        let t = Self {
            num_states,
            num_actions,
            probs,
        };
        if let Some(problem) = t.row_problems().into_iter().next() {
            return Err(Error::Validation(problem));
        }
        Ok(t)
    }

    fn row_problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let row = self.row(s, a);
                if row.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                    problems.push(format!(
                        "transition row (s={s}, a={a}) has a negative or non-finite entry"
                    ));
                    continue;
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > ROW_SUM_TOL {
                    problems.push(format!("transition row (s={s}, a={a}) sums to {total}"));
                }
            }
        }
        problems
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.probs[start..start + self.num_states]
    }

    pub fn get(&self, s: usize, a: usize, next: usize) -> f64 {
        self.row(s, a)[next]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Largest entrywise difference.
    pub fn max_abs_diff(&self, other: &TransitionTensor) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `n` generative-model calls per state-action pair, aggregated into
    /// counts. Each `(s, a)` uses its own stream derived from `(seed, s, a)`.
    pub fn sample_counts(&self, n: u64, seed: u64) -> Result<TransitionCounts> {
        if n == 0 {
            return Err(Error::InvalidArgument("need at least one sample per pair".into()));
        }
        let mut counts = Vec::with_capacity(self.probs.len());
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let mut rng = seed::rng(seed, &[s as u64, a as u64]);
                counts.extend(multinomial(&mut rng, n, self.row(s, a)));
            }
        }
        Ok(TransitionCounts {
            num_states: self.num_states,
            num_actions: self.num_actions,
            n,
            counts,
        })
    }
}

/// One multinomial draw by sequential conditional binomials.
fn multinomial(rng: &mut seed::Rng, n: u64, probs: &[f64]) -> Vec<u64> {
    let mut out = vec![0; probs.len()];
    let mut remaining = n;
    let mut mass_left = 1.0;
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() || p >= mass_left {
            out[i] = remaining;
            break;
        }
        let q = (p / mass_left).clamp(0.0, 1.0);
        let k = if q == 0.0 {
            0
        } else {
            Binomial::new(remaining, q).expect("probability in [0, 1]").sample(rng)
        };
        out[i] = k;
        remaining -= k;
        mass_left -= p;
    }
    out
}

/// Aggregated generative-model draws: `counts[s][a][s']` with every row
/// summing to `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionCounts {
    num_states: usize,
    num_actions: usize,
    n: u64,
    counts: Vec<u64>,
}

impl TransitionCounts {
    pub fn new(num_states: usize, num_actions: usize, n: u64, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != num_states * num_actions * num_states || n == 0 {
            return Err(Error::ShapeMismatch("transition counts".into()));
        }
        for (i, row) in counts.chunks(num_states).enumerate() {
            if row.iter().sum::<u64>() != n {
                return Err(Error::Validation(format!(
                    "count row (s={}, a={}) does not sum to n={n}",
                    i / num_actions,
                    i % num_actions
                )));
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            n,
            counts,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn get(&self, s: usize, a: usize, next: usize) -> u64 {
        self.counts[(s * self.num_actions + a) * self.num_states + next]
    }

    /// `P̂(s'|s,a) = count / n`.
    pub fn empirical_transition(&self) -> TransitionTensor {
        let n = self.n as f64;
        TransitionTensor {
            num_states: self.num_states,
            num_actions: self.num_actions,
            probs: self.counts.iter().map(|&c| c as f64 / n).collect(),
        }
    }
}

/// A stochastic policy `π(a|s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != num_states * num_actions {
            return Err(Error::ShapeMismatch(format!(
                "policy has {} entries, expected {}",
                probs.len(),
                num_states * num_actions
            )));
        }
        for (s, row) in probs.chunks(num_actions).enumerate() {
            let total: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Validation(format!(
                    "policy row s={s} is not a probability vector (sum {total})"
                )));
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            probs,
        })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_states * num_actions],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn sample_action(&self, s: usize, rng: &mut seed::Rng) -> usize {
        sample_index(self.row(s), rng)
    }
}

pub(crate) fn sample_index(probs: &[f64], rng: &mut seed::Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

/// `<S, A, P_R, P, γ>` with a known reward law per state-action pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    gamma: f64,
    transition: TransitionTensor,
    rewards: Vec<RewardSpec>,
}

impl TabularMdp {
    pub fn new(gamma: f64, transition: TransitionTensor, rewards: Vec<RewardSpec>) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Validation(format!("gamma = {gamma} must lie in (0, 1)")));
        }
        let pairs = transition.num_states * transition.num_actions;
        if rewards.len() != pairs {
            return Err(Error::ShapeMismatch(format!(
                "{} reward specs for {pairs} state-action pairs",
                rewards.len()
            )));
        }
        for (i, r) in rewards.iter().enumerate() {
            r.validate().map_err(|e| {
                Error::Validation(format!(
                    "reward (s={}, a={}): {e}",
                    i / transition.num_actions,
                    i % transition.num_actions
                ))
            })?;
        }
        Ok(Self {
            gamma,
            transition,
            rewards,
        })
    }

    pub fn num_states(&self) -> usize {
        self.transition.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.transition.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn transition(&self) -> &TransitionTensor {
        &self.transition
    }

    pub fn reward(&self, s: usize, a: usize) -> &RewardSpec {
        &self.rewards[s * self.num_actions() + a]
    }

    pub fn rewards(&self) -> &[RewardSpec] {
        &self.rewards
    }

    /// Analytic `E[R | s, a]`, indexed `s * A + a`.
    pub fn reward_means(&self) -> Vec<f64> {
        self.rewards.iter().map(RewardSpec::mean).collect()
    }

    /// The same model with another transition kernel (e.g. the estimate `P̂`).
    pub fn with_transition(&self, transition: TransitionTensor) -> Result<Self> {
        if transition.num_states != self.num_states() || transition.num_actions != self.num_actions() {
            return Err(Error::ShapeMismatch("replacement transition tensor".into()));
        }
        Ok(Self {
            transition,
            ..self.clone()
        })
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(gamma, self.transition.clone(), self.rewards.clone())
    }

    /// Generative-model data: `n` next-state draws for every `(s, a)`.
    pub fn sample_transitions(&self, n: u64, seed: u64) -> Result<TransitionCounts> {
        self.transition.sample_counts(n, seed)
    }
}

/// Free-function form of [`TabularMdp::sample_transitions`].
pub fn sample_transitions(mdp: &TabularMdp, n: u64, seed: u64) -> Result<TransitionCounts> {
    mdp.sample_transitions(n, seed)
}

/// Scale of the truncated Gaussian rewards of [`random_mdp`].
pub const RANDOM_REWARD_SCALE: f64 = 0.1;

/// Random model: flat-Dirichlet transition rows, rewards
/// `N(l, 0.1²)` truncated to `[0, 1]` with `l ~ U[0, 1]`, and a
/// flat-Dirichlet policy.
pub fn random_mdp(num_states: usize, num_actions: usize, gamma: f64, seed: u64) -> Result<(TabularMdp, Policy)> {
    if num_states == 0 || num_actions == 0 {
        return Err(Error::InvalidArgument("need at least one state and action".into()));
    }
    let mut rng = seed::rng(seed, &[0x004d_4450]);
    let dirichlet = |len: usize, rng: &mut seed::Rng| -> Vec<f64> {
        let draws: Vec<f64> = (0..len).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        draws.into_iter().map(|d| d / total).collect()
    };
    let mut probs = Vec::with_capacity(num_states * num_actions * num_states);
    for _ in 0..num_states * num_actions {
        probs.extend(dirichlet(num_states, &mut rng));
    }
    let rewards = (0..num_states * num_actions)
        .map(|_| RewardSpec::TruncatedGaussian {
            loc: rng.random::<f64>(),
            scale: RANDOM_REWARD_SCALE,
        })
        .collect();
    let mut policy = Vec::with_capacity(num_states * num_actions);
    for _ in 0..num_states {
        policy.extend(dirichlet(num_actions, &mut rng));
    }
    let transition = TransitionTensor::new(num_states, num_actions, probs)?;
    Ok((
        TabularMdp::new(gamma, transition, rewards)?,
        Policy::new(num_states, num_actions, policy)?,
    ))
}

/// On-disk JSON form of a model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: f64,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<Vec<RewardSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<Vec<Vec<f64>>>,
}

impl MdpFile {
    pub fn from_model(mdp: &TabularMdp, policy: Option<&Policy>) -> Self {
        let (s_count, a_count) = (mdp.num_states(), mdp.num_actions());
        Self {
            num_states: s_count,
            num_actions: a_count,
            gamma: mdp.gamma,
            transition: (0..s_count)
                .map(|s| (0..a_count).map(|a| mdp.transition.row(s, a).to_vec()).collect())
                .collect(),
            rewards: (0..s_count)
                .map(|s| (0..a_count).map(|a| mdp.reward(s, a).clone()).collect())
                .collect(),
            policy: policy.map(|p| (0..s_count).map(|s| p.row(s).to_vec()).collect()),
        }
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    /// Every invariant violation in the file, in reading order.
    pub fn problems(&self) -> Vec<String> {
        let (s_count, a_count) = (self.num_states, self.num_actions);
        let mut problems = Vec::new();
        if s_count == 0 || a_count == 0 {
            problems.push("num_states and num_actions must be positive".to_string());
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            problems.push(format!("gamma = {} must lie in (0, 1)", self.gamma));
        }
        if self.transition.len() != s_count {
            problems.push(format!(
                "transition has {} state blocks, expected {s_count}",
                self.transition.len()
            ));
        }
        for (s, block) in self.transition.iter().enumerate() {
            if block.len() != a_count {
                problems.push(format!(
                    "transition[{s}] has {} actions, expected {a_count}",
                    block.len()
                ));
            }
            for (a, row) in block.iter().enumerate() {
                if row.len() != s_count {
                    problems.push(format!(
                        "transition row (s={s}, a={a}) has {} entries, expected {s_count}",
                        row.len()
                    ));
                    continue;
                }
                let total: f64 = row.iter().sum();
                if row.iter().any(|p| !(*p >= 0.0)) {
                    problems.push(format!("transition row (s={s}, a={a}) has a negative entry"));
                } else if (total - 1.0).abs() > ROW_SUM_TOL {
                    problems.push(format!("transition row (s={s}, a={a}) sums to {total}"));
                }
            }
        }
        if self.rewards.len() != s_count {
            problems.push(format!(
                "rewards has {} state blocks, expected {s_count}",
                self.rewards.len()
            ));
        }
        for (s, block) in self.rewards.iter().enumerate() {
            if block.len() != a_count {
                problems.push(format!("rewards[{s}] has {} actions, expected {a_count}", block.len()));
            }
            for (a, r) in block.iter().enumerate() {
                if let Err(e) = r.validate() {
                    problems.push(format!("reward (s={s}, a={a}): {e}"));
                }
            }
        }
        if let Some(policy) = &self.policy {
            if policy.len() != s_count {
                problems.push(format!("policy has {} rows, expected {s_count}", policy.len()));
            }
            for (s, row) in policy.iter().enumerate() {
                let total: f64 = row.iter().sum();
                if row.len() != a_count {
                    problems.push(format!(
                        "policy row s={s} has {} entries, expected {a_count}",
                        row.len()
                    ));
                } else if row.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > ROW_SUM_TOL {
                    problems.push(format!("policy row s={s} sums to {total}"));
                }
            }
        }
        problems
    }

    /// Builds the model; a missing policy defaults to uniform over actions.
    pub fn into_model(self) -> Result<(TabularMdp, Policy)> {
        let problems = self.problems();
        if !problems.is_empty() {
            return Err(Error::Validation(problems.join("; ")));
        }
        let (s_count, a_count) = (self.num_states, self.num_actions);
        let probs = self.transition.into_iter().flatten().flatten().collect();
        let transition = TransitionTensor::new(s_count, a_count, probs)?;
        let rewards = self.rewards.into_iter().flatten().collect();
        let mdp = TabularMdp::new(self.gamma, transition, rewards)?;
        let policy = match self.policy {
            Some(rows) => Policy::new(s_count, a_count, rows.into_iter().flatten().collect())?,
            None => Policy::uniform(s_count, a_count),
        };
        Ok((mdp, policy))
    }
}

pub fn load_mdp(path: impl AsRef<Path>) -> Result<(TabularMdp, Policy)> {
    let path = path.as_ref();
    MdpFile::parse(&fs::read_to_string(path)?, path)?.into_model()
}

pub fn save_mdp(mdp: &TabularMdp, policy: &Policy, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(&MdpFile::from_model(mdp, Some(policy)))?;
    fs::write(path, text + "\n")?;
    Ok(())
}
