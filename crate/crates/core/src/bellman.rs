//! The distributional Bellman operator on categorical return distributions.
//!
//! For each state `s` the operator returns
//! `Σ_{a,s'} π(a|s) P(s'|s,a) Σ_j w^R_{s,a}[j] · proj((b_{x_j,γ})_# η(s'))`,
//! where `b_{r,γ}(x) = r + γx` and `proj` is the mean-preserving two-atom
//! interpolation onto the grid. Reward laws are discretized onto the return
//! grid, so shifting by a reward atom is an exact index shift and the whole
//! operator is a fixed linear map on weight space. The same type serves the
//! true operator (built from `P`) and the empirical one (built from `P̂`).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mdp::{Policy, TabularMdp, TransitionTensor};
use crate::measures::{self, CategoricalMeasure, GridWeights, Metric, ReturnGrid, SignedCategorical};

/// One return distribution per state, all on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnDistributionVector {
    grid: ReturnGrid,
    num_states: usize,
    weights: Vec<f64>,
}

impl ReturnDistributionVector {
    pub fn new(measures: Vec<CategoricalMeasure>) -> Result<Self> {
        let grid = measures
            .first()
            .ok_or_else(|| Error::InvalidArgument("need at least one state".into()))?
            .grid();
        let mut weights = Vec::with_capacity(measures.len() * grid.num_atoms());
        for m in &measures {
            grid.check_same(&m.grid())?;
            weights.extend_from_slice(m.weights());
        }
        Ok(Self {
            grid,
            num_states: measures.len(),
            weights,
        })
    }

    /// The same measure at every state.
    pub fn constant(num_states: usize, measure: &CategoricalMeasure) -> Self {
        Self {
            grid: measure.grid(),
            num_states,
            weights: measure.weights().repeat(num_states),
        }
    }

    pub fn grid(&self) -> ReturnGrid {
        self.grid
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn state(&self, s: usize) -> &[f64] {
        let n = self.grid.num_atoms();
        &self.weights[s * n..(s + 1) * n]
    }

    pub fn measure(&self, s: usize) -> CategoricalMeasure {
        CategoricalMeasure::from_raw(self.grid, self.state(s).to_vec())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    /// Per-state distances to `other`.
    pub fn distances(&self, other: &Self, kind: Metric) -> Result<Vec<f64>> {
        self.check_compatible(other.grid, other.num_states)?;
        Ok((0..self.num_states)
            .map(|s| {
                let (a, b) = (self.state(s), other.state(s));
                match kind {
                    Metric::W1 => measures::w1_weights(&self.grid, a, b),
                    Metric::Ks => measures::ks_weights(a, b),
                    Metric::Tv => measures::tv_weights(a, b),
                }
            })
            .collect())
    }

    /// `sup_s d(self(s), other(s))`.
    pub fn sup_distance(&self, other: &Self, kind: Metric) -> Result<f64> {
        Ok(self.distances(other, kind)?.into_iter().fold(0.0, f64::max))
    }

    fn check_compatible(&self, grid: ReturnGrid, num_states: usize) -> Result<()> {
        self.grid.check_same(&grid)?;
        if num_states != self.num_states {
            return Err(Error::ShapeMismatch(format!(
                "{} states vs {num_states}",
                self.num_states
            )));
        }
        Ok(())
    }
}

/// One zero-total signed measure per state.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedVector {
    grid: ReturnGrid,
    num_states: usize,
    weights: Vec<f64>,
}

impl SignedVector {
    pub fn new(measures: Vec<SignedCategorical>) -> Result<Self> {
        let grid = measures
            .first()
            .ok_or_else(|| Error::InvalidArgument("need at least one state".into()))?
            .grid();
        let mut weights = Vec::with_capacity(measures.len() * grid.num_atoms());
        for m in &measures {
            grid.check_same(&m.grid())?;
            weights.extend_from_slice(m.weights());
        }
        Ok(Self {
            grid,
            num_states: measures.len(),
            weights,
        })
    }

    /// Validates the zero-total constraint state by state.
    pub fn from_flat(grid: ReturnGrid, num_states: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != num_states * grid.num_atoms() {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for {num_states} states of {} atoms",
                weights.len(),
                grid.num_atoms()
            )));
        }
        for chunk in weights.chunks(grid.num_atoms()) {
            SignedCategorical::new(grid, chunk.to_vec())?;
        }
        Ok(Self {
            grid,
            num_states,
            weights,
        })
    }

    pub(crate) fn from_flat_unchecked(grid: ReturnGrid, num_states: usize, weights: Vec<f64>) -> Self {
        debug_assert_eq!(weights.len(), num_states * grid.num_atoms());
        Self {
            grid,
            num_states,
            weights,
        }
    }

    pub fn zeros(grid: ReturnGrid, num_states: usize) -> Self {
        Self {
            grid,
            num_states,
            weights: vec![0.0; num_states * grid.num_atoms()],
        }
    }

    /// `η - η'` state by state.
    pub fn difference(a: &ReturnDistributionVector, b: &ReturnDistributionVector) -> Result<Self> {
        a.check_compatible(b.grid, b.num_states)?;
        Ok(Self {
            grid: a.grid,
            num_states: a.num_states,
            weights: a.weights.iter().zip(&b.weights).map(|(x, y)| x - y).collect(),
        })
    }

    pub fn grid(&self) -> ReturnGrid {
        self.grid
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn state(&self, s: usize) -> &[f64] {
        let n = self.grid.num_atoms();
        &self.weights[s * n..(s + 1) * n]
    }

    pub fn signed(&self, s: usize) -> SignedCategorical {
        SignedCategorical::from_raw(self.grid, self.state(s).to_vec())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.weights
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            weights: self.weights.iter().map(|w| c * w).collect(),
            ..self.clone()
        }
    }

    /// `α·self + β·other`.
    pub fn combine(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        if self.num_states != other.num_states {
            return Err(Error::ShapeMismatch("state counts differ".into()));
        }
        Ok(Self {
            weights: self
                .weights
                .iter()
                .zip(&other.weights)
                .map(|(x, y)| alpha * x + beta * y)
                .collect(),
            ..self.clone()
        })
    }

    /// `sup_s ‖ν(s)‖` in the given norm.
    pub fn sup_norm(&self, kind: Metric) -> f64 {
        self.weights
            .chunks(self.grid.num_atoms())
            .map(|w| measures::signed_norm_weights(&self.grid, w, kind))
            .fold(0.0, f64::max)
    }

    /// Largest per-state total mass in absolute value.
    pub fn max_total_mass(&self) -> f64 {
        self.weights
            .chunks(self.grid.num_atoms())
            .map(|w| w.iter().sum::<f64>().abs())
            .fold(0.0, f64::max)
    }
}

/// `T^π` (or `T̂^π` when built from an estimated kernel) on a fixed grid.
#[derive(Debug, Clone)]
pub struct BellmanOperator {
    grid: ReturnGrid,
    transition: TransitionTensor,
    policy: Policy,
    reward_measures: Vec<CategoricalMeasure>,
    /// Nonzero reward atoms `(index, weight)` per state-action pair.
    reward_atoms: Vec<Vec<(usize, f64)>>,
    /// Projection of `x_k ↦ γ x_k`: lower atom and interpolation fraction.
    scaled: Vec<(usize, f64)>,
}

impl BellmanOperator {
    pub fn new(
        grid: ReturnGrid,
        transition: TransitionTensor,
        policy: Policy,
        reward_measures: Vec<CategoricalMeasure>,
    ) -> Result<Self> {
        let (s_count, a_count) = (transition.num_states(), transition.num_actions());
        if policy.num_states() != s_count || policy.num_actions() != a_count {
            return Err(Error::ShapeMismatch("policy and transition shapes differ".into()));
        }
        if reward_measures.len() != s_count * a_count {
            return Err(Error::ShapeMismatch(format!(
                "{} reward measures for {} state-action pairs",
                reward_measures.len(),
                s_count * a_count
            )));
        }
        for r in &reward_measures {
            grid.check_same(&r.grid())?;
        }
        let reward_atoms = reward_measures
            .iter()
            .map(|r| {
                r.weights()
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| **w != 0.0)
                    .map(|(j, w)| (j, *w))
                    .collect()
            })
            .collect();
        let scaled = (0..grid.num_atoms())
            .map(|k| grid.bracket(grid.gamma() * grid.atom(k)))
            .collect();
        Ok(Self {
            grid,
            transition,
            policy,
            reward_measures,
            reward_atoms,
            scaled,
        })
    }

    /// The true operator of `mdp` under `policy`; the grid must use the
    /// model's discount.
    pub fn from_mdp(mdp: &TabularMdp, policy: &Policy, grid: ReturnGrid) -> Result<Self> {
        if grid.gamma() != mdp.gamma() {
            return Err(Error::InvalidArgument(format!(
                "grid discount {} differs from the model's {}",
                grid.gamma(),
                mdp.gamma()
            )));
        }
        let rewards = mdp
            .rewards()
            .iter()
            .map(|r| r.discretize(grid))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, mdp.transition().clone(), policy.clone(), rewards)
    }

    /// The same operator with another transition kernel, e.g. `P̂`.
    pub fn with_transition(&self, transition: TransitionTensor) -> Result<Self> {
        if transition.num_states() != self.num_states() || transition.num_actions() != self.num_actions() {
            return Err(Error::ShapeMismatch("replacement transition tensor".into()));
        }
        Ok(Self {
            transition,
            ..self.clone()
        })
    }

    pub fn grid(&self) -> ReturnGrid {
        self.grid
    }

    pub fn gamma(&self) -> f64 {
        self.grid.gamma()
    }

    pub fn num_states(&self) -> usize {
        self.transition.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.transition.num_actions()
    }

    pub fn transition(&self) -> &TransitionTensor {
        &self.transition
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn reward_measure(&self, s: usize, a: usize) -> &CategoricalMeasure {
        &self.reward_measures[s * self.num_actions() + a]
    }

    /// Length of a flattened state-by-atom weight vector.
    pub fn flat_len(&self) -> usize {
        self.num_states() * self.grid.num_atoms()
    }

    pub fn apply(&self, eta: &ReturnDistributionVector) -> Result<ReturnDistributionVector> {
        self.check_input(eta.grid, eta.num_states)?;
        let mut out = vec![0.0; self.flat_len()];
        self.apply_flat(&eta.weights, &mut out);
        Ok(ReturnDistributionVector {
            grid: self.grid,
            num_states: eta.num_states,
            weights: out,
        })
    }

    pub fn apply_signed(&self, nu: &SignedVector) -> Result<SignedVector> {
        self.check_input(nu.grid, nu.num_states)?;
        let mut out = vec![0.0; self.flat_len()];
        self.apply_flat(&nu.weights, &mut out);
        Ok(SignedVector::from_flat_unchecked(self.grid, nu.num_states, out))
    }

    fn check_input(&self, grid: ReturnGrid, num_states: usize) -> Result<()> {
        self.grid.check_same(&grid)?;
        if num_states != self.num_states() {
            return Err(Error::ShapeMismatch(format!(
                "operator has {} states, input has {num_states}",
                self.num_states()
            )));
        }
        Ok(())
    }

    /// The operator on raw flattened weights (any sign, any mass).
    pub fn apply_flat(&self, input: &[f64], out: &mut [f64]) {
        let n = self.grid.num_atoms();
        assert_eq!(input.len(), self.flat_len());
        assert_eq!(out.len(), self.flat_len());
        let mut mixed = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        for s in 0..self.num_states() {
            let out_s = &mut out[s * n..(s + 1) * n];
            out_s.fill(0.0);
            for a in 0..self.num_actions() {
                let pi = self.policy.prob(s, a);
                if pi == 0.0 {
                    continue;
                }
                mixed.fill(0.0);
                for (next, &p) in self.transition.row(s, a).iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    for (m, w) in mixed.iter_mut().zip(&input[next * n..(next + 1) * n]) {
                        *m += p * w;
                    }
                }
                self.add_reward_pushforward(s, a, pi, &mixed, &mut scratch, out_s);
            }
        }
    }

    /// `out += coef · Σ_j w^R_{s,a}[j] proj((b_{x_j,γ})_# input)` for one
    /// state's weight vector. `scratch` must have one slot per atom.
    pub(crate) fn add_reward_pushforward(
        &self,
        s: usize,
        a: usize,
        coef: f64,
        input: &[f64],
        scratch: &mut [f64],
        out: &mut [f64],
    ) {
        let n = self.grid.num_atoms();
        let top = n - 1;
        scratch.fill(0.0);
        for (&(lo, frac), &w) in self.scaled.iter().zip(input) {
            if w == 0.0 {
                continue;
            }
            scratch[lo] += w * (1.0 - frac);
            if frac > 0.0 {
                scratch[(lo + 1).min(top)] += w * frac;
            }
        }
        for &(shift, rw) in &self.reward_atoms[s * self.num_actions() + a] {
            let c = coef * rw;
            let (inside, clipped) = scratch.split_at(n - shift);
            for (o, x) in out[shift..].iter_mut().zip(inside) {
                *o += c * x;
            }
            out[top] += c * clipped.iter().sum::<f64>();
        }
    }
}

/// Per-iteration record of distributional dynamic programming.
#[derive(Debug, Clone, PartialEq)]
pub struct DdpTrace {
    /// `sup_s W1(η^(k+1)(s), η^(k)(s))` for each iteration.
    pub steps: Vec<f64>,
    /// Whether the last step fell below the tolerance.
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct DdpOutcome {
    pub eta: ReturnDistributionVector,
    pub trace: DdpTrace,
}

/// Iterates `η ← T η` until the sup-state W1 step is at most `tol` or
/// `max_iters` applications have been made.
pub fn ddp(op: &BellmanOperator, eta0: &ReturnDistributionVector, max_iters: usize, tol: f64) -> Result<DdpOutcome> {
    ddp_observed(op, eta0, max_iters, tol, |_, _| {})
}

/// [`ddp`] with a callback receiving every iterate (1-based iteration index).
pub fn ddp_observed(
    op: &BellmanOperator,
    eta0: &ReturnDistributionVector,
    max_iters: usize,
    tol: f64,
    mut observer: impl FnMut(usize, &ReturnDistributionVector),
) -> Result<DdpOutcome> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    op.check_input(eta0.grid, eta0.num_states)?;
    let mut current = eta0.clone();
    let mut next = eta0.clone();
    let mut steps = Vec::new();
    let mut converged = false;
    for iteration in 1..=max_iters {
        op.apply_flat(&current.weights, &mut next.weights);
        let step = next.sup_distance(&current, Metric::W1)?;
        std::mem::swap(&mut current, &mut next);
        steps.push(step);
        observer(iteration, &current);
        if step <= tol {
            converged = true;
            break;
        }
    }
    Ok(DdpOutcome {
        eta: current,
        trace: DdpTrace { steps, converged },
    })
}

/// `V^π` from the linear system `(I - γP^π) V = r^π`, using analytic reward
/// means.
pub fn classical_value(mdp: &TabularMdp, policy: &Policy) -> Result<Vec<f64>> {
    let s_count = mdp.num_states();
    let p_pi = policy_transition(mdp.transition(), policy);
    let means = mdp.reward_means();
    let r_pi = DVector::from_fn(s_count, |s, _| {
        (0..mdp.num_actions())
            .map(|a| policy.prob(s, a) * means[s * mdp.num_actions() + a])
            .sum()
    });
    let system = DMatrix::identity(s_count, s_count) - p_pi * mdp.gamma();
    let v = system.clone().lu().solve(&r_pi).ok_or(Error::NumericFailure {
        residual: f64::INFINITY,
        bound: 1e-10,
    })?;
    let residual = (&system * &v - &r_pi).amax();
    if residual > 1e-10 {
        return Err(Error::NumericFailure { residual, bound: 1e-10 });
    }
    Ok(v.iter().copied().collect())
}

/// `P^π(s, s') = Σ_a π(a|s) P(s'|s,a)`.
pub fn policy_transition(transition: &TransitionTensor, policy: &Policy) -> DMatrix<f64> {
    let s_count = transition.num_states();
    DMatrix::from_fn(s_count, s_count, |s, next| {
        (0..transition.num_actions())
            .map(|a| policy.prob(s, a) * transition.get(s, a, next))
            .sum()
    })
}

/// Number of Neumann terms beyond the zeroth so that the W1 tail
/// `Σ_{j>J} γ^j ‖ν‖` stays below `tail_tol`.
pub fn truncation_depth(gamma: f64, norm: f64, tail_tol: f64) -> usize {
    let norm = norm.max(f64::MIN_POSITIVE);
    let ratio = tail_tol * (1.0 - gamma) / norm;
    if ratio >= 1.0 {
        return 0;
    }
    (ratio.ln() / gamma.ln()).ceil().max(0.0) as usize
}

#[derive(Debug, Clone)]
pub struct NeumannOutcome {
    pub value: SignedVector,
    /// Highest power `J` of the operator included.
    pub depth: usize,
}

/// `Σ_{j=0}^J T^j ν ≈ (I - T)^{-1} ν` on zero-total inputs, with `J` from
/// [`truncation_depth`] applied to `sup_s ‖ν(s)‖_W1`.
pub fn neumann_inverse(op: &BellmanOperator, nu: &SignedVector, tail_tol: f64) -> Result<NeumannOutcome> {
    if !(tail_tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tail tolerance must be positive, got {tail_tol}"
        )));
    }
    op.check_input(nu.grid, nu.num_states)?;
    let norm = nu.sup_norm(Metric::W1);
    let depth = if norm == 0.0 {
        0
    } else {
        truncation_depth(op.gamma(), norm, tail_tol)
    };
    let value = neumann_flat(op, &nu.weights, depth);
    Ok(NeumannOutcome {
        value: SignedVector::from_flat_unchecked(op.grid, nu.num_states, value),
        depth,
    })
}

/// `Σ_{j=0}^{depth} T^j input` on raw weights.
pub(crate) fn neumann_flat(op: &BellmanOperator, input: &[f64], depth: usize) -> Vec<f64> {
    let mut acc = input.to_vec();
    let mut term = input.to_vec();
    let mut next = vec![0.0; input.len()];
    for _ in 0..depth {
        op.apply_flat(&term, &mut next);
        std::mem::swap(&mut term, &mut next);
        for (a, t) in acc.iter_mut().zip(&term) {
            *a += t;
        }
    }
    acc
}

/// Largest `S·(K+1)` for which a dense operator matrix is built.
pub const OPERATOR_MATRIX_CAP: usize = 5000;

/// Dense matrix of the operator on flattened weights (state-major).
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    grid: ReturnGrid,
    num_states: usize,
    matrix: DMatrix<f64>,
}

impl OperatorMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn grid(&self) -> ReturnGrid {
        self.grid
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(input))
            .iter()
            .copied()
            .collect()
    }
}

/// Builds the matrix column by column from unit weight vectors.
pub fn operator_matrix(op: &BellmanOperator) -> Result<OperatorMatrix> {
    let size = op.flat_len();
    if size > OPERATOR_MATRIX_CAP {
        return Err(Error::SizeCap {
            size,
            cap: OPERATOR_MATRIX_CAP,
        });
    }
    let mut matrix = DMatrix::zeros(size, size);
    let mut unit = vec![0.0; size];
    let mut column = vec![0.0; size];
    for j in 0..size {
        unit[j] = 1.0;
        op.apply_flat(&unit, &mut column);
        matrix.column_mut(j).copy_from_slice(&column);
        unit[j] = 0.0;
    }
    Ok(OperatorMatrix {
        grid: op.grid,
        num_states: op.num_states(),
        matrix,
    })
}

/// Residual bound for [`exact_inverse_apply`].
pub const EXACT_SOLVE_TOL: f64 = 1e-8;

/// Solves `(I - M) x = ν` on the zero-total-per-state subspace.
///
/// `I - M` is singular on the full weight space (constant mass is a fixed
/// direction) but injective on zero-total vectors. Those are parametrized by
/// all atoms but the last in each state, which turns the problem into a square
/// nonsingular system; an SVD pseudo-inverse is the fallback if LU fails.
pub fn exact_inverse_apply(m: &OperatorMatrix, nu: &SignedVector) -> Result<SignedVector> {
    m.grid.check_same(&nu.grid)?;
    if nu.num_states != m.num_states {
        return Err(Error::ShapeMismatch("state counts differ".into()));
    }
    let n = m.grid.num_atoms();
    let k = n - 1;
    let size = m.num_states * n;
    let reduced = m.num_states * k;
    let full_index = |r: usize| (r / k) * n + r % k;

    let lhs = DMatrix::identity(size, size) - &m.matrix;
    let system = DMatrix::from_fn(reduced, reduced, |row, col| {
        let last = (col / k) * n + k;
        lhs[(full_index(row), full_index(col))] - lhs[(full_index(row), last)]
    });
    let rhs = DVector::from_fn(reduced, |row, _| nu.weights[full_index(row)]);
    let y = match system.clone().lu().solve(&rhs) {
        Some(y) => y,
        None => system
            .svd(true, true)
            .solve(&rhs, 1e-14)
            .map_err(|_| Error::NumericFailure {
                residual: f64::INFINITY,
                bound: EXACT_SOLVE_TOL,
            })?,
    };
    let mut x = vec![0.0; size];
    for s in 0..m.num_states {
        let mut total = 0.0;
        for j in 0..k {
            let v = y[s * k + j];
            x[s * n + j] = v;
            total += v;
        }
        x[s * n + k] = -total;
    }
    let image = &lhs * DVector::from_column_slice(&x);
    let residual = image
        .iter()
        .zip(&nu.weights)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if residual > EXACT_SOLVE_TOL {
        return Err(Error::NumericFailure {
            residual,
            bound: EXACT_SOLVE_TOL,
        });
    }
    Ok(SignedVector::from_flat_unchecked(m.grid, m.num_states, x))
}
