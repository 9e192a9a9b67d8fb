//! Categorical measures on an evenly spaced return grid.
//!
//! All returns of a discounted MDP with rewards in `[0, 1]` lie in
//! `[0, 1/(1-γ)]`. A [`ReturnGrid`] places `K+1` atoms
//! `x_k = k / ((K+1)(1-γ))` on that interval; [`CategoricalMeasure`]s are
//! probability vectors over the atoms and [`SignedCategorical`]s are the
//! zero-total signed vectors that differences of return distributions (and
//! their Gaussian limits) live in.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the total mass of a probability vector before renormalizing.
pub const NORMALIZATION_TOL: f64 = 1e-9;
/// Tolerance on the total mass of a signed measure, relative to its L1 size.
pub const ZERO_TOTAL_TOL: f64 = 1e-10;

/// The shared atom lattice `x_k = k·Δ`, `Δ = 1/((K+1)(1-γ))`, `k = 0..=K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnGrid {
    max_index: usize,
    gamma: f64,
}

impl ReturnGrid {
    /// `max_index` is `K`; the grid carries `K + 1` atoms.
    pub fn new(max_index: usize, gamma: f64) -> Result<Self> {
        if max_index < 1 {
            return Err(Error::InvalidArgument("a return grid needs K >= 1".to_string()));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidArgument(format!("discount {gamma} must lie in (0, 1)")));
        }
        Ok(Self { max_index, gamma })
    }

    pub fn max_index(&self) -> usize {
        self.max_index
    }

    pub fn num_atoms(&self) -> usize {
        self.max_index + 1
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Distance `Δ` between neighbouring atoms.
    pub fn spacing(&self) -> f64 {
        1.0 / ((self.max_index + 1) as f64 * (1.0 - self.gamma))
    }

    pub fn atom(&self, k: usize) -> f64 {
        k as f64 * self.spacing()
    }

    pub fn atoms(&self) -> Vec<f64> {
        (0..self.num_atoms()).map(|k| self.atom(k)).collect()
    }

    /// Largest atom `x_K`, strictly below `1/(1-γ)`.
    pub fn upper(&self) -> f64 {
        self.atom(self.max_index)
    }

    /// `1/(1-γ)`, the bound on every return.
    pub fn return_bound(&self) -> f64 {
        1.0 / (1.0 - self.gamma)
    }

    /// Index of the atom at or below `value` and the fraction of the way to
    /// the next atom. Values at or above `x_K` map to `(K, 0)`, values below
    /// zero to `(0, 0)`. Values within rounding of an atom snap onto it.
    pub fn bracket(&self, value: f64) -> (usize, f64) {
        let t = value / self.spacing();
        if t <= 0.0 {
            return (0, 0.0);
        }
        let nearest = t.round();
        let t = if (t - nearest).abs() <= 4.0 * f64::EPSILON * t.max(1.0) {
            nearest
        } else {
            t
        };
        let lower = t.floor();
        if lower >= self.max_index as f64 {
            return (self.max_index, 0.0);
        }
        (lower as usize, t - lower)
    }

    /// Index of the atom closest to `value` (clamped to the grid).
    pub fn nearest(&self, value: f64) -> usize {
        let t = (value / self.spacing()).round();
        if t <= 0.0 {
            0
        } else {
            (t as usize).min(self.max_index)
        }
    }

    /// Masses a distribution with CDF `cdf` puts on the Voronoi cells of the
    /// atoms. The first cell extends to `-∞` and the last to `+∞`.
    pub fn voronoi_masses(&self, cdf: impl Fn(f64) -> f64) -> Vec<f64> {
        let half = 0.5 * self.spacing();
        let mut prev = 0.0;
        (0..self.num_atoms())
            .map(|k| {
                let next = if k == self.max_index {
                    1.0
                } else {
                    cdf(self.atom(k) + half)
                };
                let m = (next - prev).max(0.0);
                prev = next.max(prev);
                m
            })
            .collect()
    }

    pub(crate) fn check_same(&self, other: &ReturnGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::IncompatibleGrid)
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len == self.num_atoms() {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "expected {} weights, got {len}",
                self.num_atoms()
            )))
        }
    }
}

/// Which probability metric (or signed-measure norm) to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    W1,
    Ks,
    Tv,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::W1, Metric::Ks, Metric::Tv];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::W1 => "w1",
            Metric::Ks => "ks",
            Metric::Tv => "tv",
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Common view over weight vectors on a grid.
pub trait GridWeights {
    fn grid(&self) -> ReturnGrid;
    fn weights(&self) -> &[f64];
    fn is_probability(&self) -> bool;

    fn total_mass(&self) -> f64 {
        self.weights().iter().sum()
    }

    fn cdf(&self) -> Cdf {
        Cdf::new(self.grid(), self.weights())
    }

    /// `Σ_k w_k x_k^r`; `moment(1)` is the mean.
    fn moment(&self, r: u32) -> f64 {
        moment_weights(&self.grid(), self.weights(), r)
    }

    fn mean(&self) -> f64 {
        self.moment(1)
    }
}

/// Prefix sums of a weight vector, `cumulative[k] = Σ_{j<=k} w_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cdf {
    grid: ReturnGrid,
    cumulative: Vec<f64>,
}

impl Cdf {
    fn new(grid: ReturnGrid, weights: &[f64]) -> Self {
        Self {
            grid,
            cumulative: prefix_sums(weights),
        }
    }

    pub fn grid(&self) -> ReturnGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn at(&self, k: usize) -> f64 {
        self.cumulative[k]
    }

    /// `F(x)`: mass of the atoms `<= x`.
    pub fn evaluate(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let (k, _) = self.grid.bracket(x);
        self.cumulative[k]
    }
}

/// A probability vector over the atoms of a [`ReturnGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalMeasure {
    grid: ReturnGrid,
    weights: Vec<f64>,
}

impl CategoricalMeasure {
    /// Validates nonnegativity and unit mass (within [`NORMALIZATION_TOL`])
    /// and renormalizes.
    pub fn new(grid: ReturnGrid, weights: Vec<f64>) -> Result<Self> {
        grid.check_len(weights.len())?;
        let total = validate_nonnegative(&weights)?;
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self::normalized(grid, weights, total))
    }

    /// Accepts any nonnegative vector with positive mass and rescales it.
    pub fn from_unnormalized(grid: ReturnGrid, weights: Vec<f64>) -> Result<Self> {
        grid.check_len(weights.len())?;
        let total = validate_nonnegative(&weights)?;
        if total <= 0.0 {
            return Err(Error::InvalidMeasure("weights have zero mass".into()));
        }
        Ok(Self::normalized(grid, weights, total))
    }

    fn normalized(grid: ReturnGrid, mut weights: Vec<f64>, total: f64) -> Self {
        for w in &mut weights {
            *w = w.max(0.0) / total;
        }
        Self { grid, weights }
    }

    pub(crate) fn from_raw(grid: ReturnGrid, weights: Vec<f64>) -> Self {
        debug_assert_eq!(weights.len(), grid.num_atoms());
        Self { grid, weights }
    }

    /// Point mass at `value`, split between the two bracketing atoms so that
    /// the mean is exactly `value`.
    pub fn dirac(grid: ReturnGrid, value: f64) -> Result<Self> {
        if !(0.0..=grid.upper()).contains(&value) {
            return Err(Error::OutOfRange {
                value,
                lo: 0.0,
                hi: grid.upper(),
            });
        }
        let mut weights = vec![0.0; grid.num_atoms()];
        let (k, frac) = grid.bracket(value);
        weights[k] += 1.0 - frac;
        if frac > 0.0 {
            weights[k + 1] += frac;
        }
        Ok(Self { grid, weights })
    }

    /// All mass on atom `k`.
    pub fn atom(grid: ReturnGrid, k: usize) -> Result<Self> {
        if k > grid.max_index() {
            return Err(Error::OutOfRange {
                value: k as f64,
                lo: 0.0,
                hi: grid.max_index() as f64,
            });
        }
        let mut weights = vec![0.0; grid.num_atoms()];
        weights[k] = 1.0;
        Ok(Self { grid, weights })
    }

    pub fn uniform(grid: ReturnGrid) -> Self {
        let n = grid.num_atoms();
        Self {
            grid,
            weights: vec![1.0 / n as f64; n],
        }
    }

    /// Discretizes a continuous law given by its CDF onto the Voronoi cells of
    /// the atoms.
    pub fn from_cdf(grid: ReturnGrid, cdf: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_unnormalized(grid, grid.voronoi_masses(cdf))
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    /// Image under `x ↦ r + γx`, projected back onto the grid.
    pub fn pushforward_affine(&self, r: f64) -> Self {
        Self {
            grid: self.grid,
            weights: pushforward_weights(&self.grid, &self.weights, r),
        }
    }

    /// Left-continuous generalized inverse: the smallest atom with
    /// `F(x_k) >= p`.
    pub fn quantile(&self, p: f64) -> f64 {
        self.grid.atom(self.quantile_index(p))
    }

    pub fn quantile_index(&self, p: f64) -> usize {
        // Rounding in the prefix sums must not push an exact hit past p.
        let target = p - 1e-12;
        let mut acc = 0.0;
        for (k, &w) in self.weights.iter().enumerate() {
            acc += w;
            if acc >= target {
                return k;
            }
        }
        self.grid.max_index()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.moment(2) - m * m
    }

    /// Moving-average density estimate.
    ///
    /// Raw densities `w_k/Δ` are averaged over a centered window of odd width,
    /// truncated at the ends of the grid, then rescaled so `Σ d_k Δ = 1`.
    pub fn density_estimate(&self, window: usize) -> Result<Vec<f64>> {
        if window == 0 || window.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "density window must be odd and positive, got {window}"
            )));
        }
        let n = self.grid.num_atoms();
        if window > n {
            return Err(Error::InvalidArgument(format!(
                "density window {window} exceeds the {n} grid atoms"
            )));
        }
        let delta = self.grid.spacing();
        let half = window / 2;
        let prefix = prefix_sums(&self.weights);
        let sum_range = |lo: usize, hi: usize| prefix[hi] - if lo == 0 { 0.0 } else { prefix[lo - 1] };
        let mut density: Vec<f64> = (0..n)
            .map(|k| {
                let lo = k.saturating_sub(half);
                let hi = (k + half).min(n - 1);
                sum_range(lo, hi) / ((hi - lo + 1) as f64 * delta)
            })
            .collect();
        let mass: f64 = density.iter().sum::<f64>() * delta;
        if mass > 0.0 {
            for d in &mut density {
                *d /= mass;
            }
        }
        Ok(density)
    }
}

impl GridWeights for CategoricalMeasure {
    fn grid(&self) -> ReturnGrid {
        self.grid
    }
    fn weights(&self) -> &[f64] {
        &self.weights
    }
    fn is_probability(&self) -> bool {
        true
    }
}

/// A signed weight vector with zero total mass.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedCategorical {
    grid: ReturnGrid,
    weights: Vec<f64>,
}

impl SignedCategorical {
    pub fn new(grid: ReturnGrid, weights: Vec<f64>) -> Result<Self> {
        grid.check_len(weights.len())?;
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite weight".into()));
        }
        check_zero_total(&weights)?;
        Ok(Self { grid, weights })
    }

    pub(crate) fn from_raw(grid: ReturnGrid, weights: Vec<f64>) -> Self {
        debug_assert_eq!(weights.len(), grid.num_atoms());
        Self { grid, weights }
    }

    pub fn zeros(grid: ReturnGrid) -> Self {
        Self {
            grid,
            weights: vec![0.0; grid.num_atoms()],
        }
    }

    /// `μ - ν` for two probability measures on the same grid.
    pub fn difference(mu: &CategoricalMeasure, nu: &CategoricalMeasure) -> Result<Self> {
        mu.grid.check_same(&nu.grid)?;
        Ok(Self {
            grid: mu.grid,
            weights: mu.weights.iter().zip(&nu.weights).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            weights: self.weights.iter().map(|w| c * w).collect(),
        }
    }

    pub fn pushforward_affine(&self, r: f64) -> Self {
        Self {
            grid: self.grid,
            weights: pushforward_weights(&self.grid, &self.weights, r),
        }
    }

    /// The norm of the signed measure in the dual of the metric's function
    /// class: W1 integrates `|F|`, KS takes `sup |F|`, TV the positive mass.
    pub fn norm(&self, kind: Metric) -> f64 {
        signed_norm_weights(&self.grid, &self.weights, kind)
    }

    /// Signed CDF value at atom `k`.
    pub fn cumulative_at(&self, k: usize) -> f64 {
        self.weights[..=k].iter().sum()
    }
}

impl GridWeights for SignedCategorical {
    fn grid(&self) -> ReturnGrid {
        self.grid
    }
    fn weights(&self) -> &[f64] {
        &self.weights
    }
    fn is_probability(&self) -> bool {
        false
    }
}

/// Result of [`mix`].
#[derive(Debug, Clone, PartialEq)]
pub enum Mixture {
    Probability(CategoricalMeasure),
    Signed(SignedCategorical),
}

impl Mixture {
    pub fn weights(&self) -> &[f64] {
        match self {
            Mixture::Probability(m) => m.weights(),
            Mixture::Signed(m) => m.weights(),
        }
    }
}

/// Linear combination `Σ c_i μ_i`.
///
/// The result is a probability measure when every input is one and the
/// coefficients form a convex combination, a signed measure when the total
/// mass cancels, and an error otherwise.
pub fn mix(terms: &[(f64, &dyn GridWeights)]) -> Result<Mixture> {
    let Some((_, first)) = terms.first() else {
        return Err(Error::InvalidArgument("empty mixture".into()));
    };
    let grid = first.grid();
    let mut weights = vec![0.0; grid.num_atoms()];
    for (c, m) in terms {
        grid.check_same(&m.grid())?;
        for (acc, w) in weights.iter_mut().zip(m.weights()) {
            *acc += c * w;
        }
    }
    let convex = terms.iter().all(|(c, m)| *c >= 0.0 && m.is_probability())
        && (terms.iter().map(|(c, _)| c).sum::<f64>() - 1.0).abs() <= NORMALIZATION_TOL;
    if convex {
        return Ok(Mixture::Probability(CategoricalMeasure::new(grid, weights)?));
    }
    let total: f64 = weights.iter().sum();
    if check_zero_total(&weights).is_ok() {
        Ok(Mixture::Signed(SignedCategorical { grid, weights }))
    } else {
        Err(Error::InvalidMeasure(format!(
            "mixture has total mass {total}, neither a probability nor zero-total"
        )))
    }
}

/// 1-Wasserstein distance `∫ |F_μ - F_ν|`.
pub fn w1(mu: &CategoricalMeasure, nu: &CategoricalMeasure) -> Result<f64> {
    mu.grid.check_same(&nu.grid)?;
    Ok(w1_weights(&mu.grid, &mu.weights, &nu.weights))
}

/// p-Wasserstein distance through the quantile-function representation.
pub fn wp(mu: &CategoricalMeasure, nu: &CategoricalMeasure, p: f64) -> Result<f64> {
    mu.grid.check_same(&nu.grid)?;
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("Wp needs p >= 1, got {p}")));
    }
    Ok(wp_weights(&mu.grid, &mu.weights, &nu.weights, p))
}

/// Kolmogorov-Smirnov distance `max_k |F_μ(x_k) - F_ν(x_k)|`.
pub fn ks(mu: &CategoricalMeasure, nu: &CategoricalMeasure) -> Result<f64> {
    mu.grid.check_same(&nu.grid)?;
    Ok(ks_weights(&mu.weights, &nu.weights))
}

/// Total variation `sup_A |μ(A) - ν(A)|`, i.e. half the L1 distance.
pub fn tv(mu: &CategoricalMeasure, nu: &CategoricalMeasure) -> Result<f64> {
    mu.grid.check_same(&nu.grid)?;
    Ok(tv_weights(&mu.weights, &nu.weights))
}

pub fn distance(kind: Metric, mu: &CategoricalMeasure, nu: &CategoricalMeasure) -> Result<f64> {
    match kind {
        Metric::W1 => w1(mu, nu),
        Metric::Ks => ks(mu, nu),
        Metric::Tv => tv(mu, nu),
    }
}

/// `P(G₁ >= G₂)` for independent `G₁ ~ μ₁`, `G₂ ~ μ₂`.
pub fn uniform_advantage(mu1: &CategoricalMeasure, mu2: &CategoricalMeasure) -> Result<f64> {
    mu1.grid.check_same(&mu2.grid)?;
    Ok(advantage_weights(&mu1.weights, &mu2.weights))
}

/// `P(G₁ > G₂)`; together with [`uniform_advantage`] of the swapped pair it
/// sums to one.
pub fn strict_advantage(mu1: &CategoricalMeasure, mu2: &CategoricalMeasure) -> Result<f64> {
    mu1.grid.check_same(&mu2.grid)?;
    let mut below = 0.0;
    let mut total = 0.0;
    for (a, b) in mu1.weights.iter().zip(&mu2.weights) {
        total += a * below;
        below += b;
    }
    Ok(total)
}

pub(crate) fn prefix_sums(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

fn validate_nonnegative(weights: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (k, &w) in weights.iter().enumerate() {
        if !w.is_finite() || w < -1e-12 {
            return Err(Error::InvalidMeasure(format!("weight {k} is {w}")));
        }
        total += w.max(0.0);
    }
    Ok(total)
}

fn check_zero_total(weights: &[f64]) -> Result<()> {
    let total: f64 = weights.iter().sum();
    let scale: f64 = weights.iter().map(|w| w.abs()).sum::<f64>().max(1.0);
    if total.abs() <= ZERO_TOTAL_TOL * scale {
        Ok(())
    } else {
        Err(Error::NonZeroTotal { total })
    }
}

pub(crate) fn pushforward_weights(grid: &ReturnGrid, weights: &[f64], r: f64) -> Vec<f64> {
    let gamma = grid.gamma();
    let mut out = vec![0.0; weights.len()];
    for (k, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let (i, frac) = grid.bracket(r + gamma * grid.atom(k));
        out[i] += w * (1.0 - frac);
        if frac > 0.0 {
            out[i + 1] += w * frac;
        }
    }
    out
}

pub(crate) fn moment_weights(grid: &ReturnGrid, weights: &[f64], r: u32) -> f64 {
    let delta = grid.spacing();
    weights
        .iter()
        .enumerate()
        .map(|(k, w)| w * (k as f64 * delta).powi(r as i32))
        .sum()
}

pub(crate) fn w1_weights(grid: &ReturnGrid, a: &[f64], b: &[f64]) -> f64 {
    let mut cum = 0.0;
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b).take(a.len() - 1) {
        cum += x - y;
        total += cum.abs();
    }
    total * grid.spacing()
}

pub(crate) fn ks_weights(a: &[f64], b: &[f64]) -> f64 {
    let mut cum = 0.0;
    let mut best: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        cum += x - y;
        best = best.max(cum.abs());
    }
    best
}

pub(crate) fn tv_weights(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

pub(crate) fn signed_norm_weights(grid: &ReturnGrid, w: &[f64], kind: Metric) -> f64 {
    match kind {
        Metric::W1 => {
            let mut cum = 0.0;
            let mut total = 0.0;
            for x in &w[..w.len() - 1] {
                cum += x;
                total += cum.abs();
            }
            total * grid.spacing()
        }
        Metric::Ks => {
            let mut cum = 0.0;
            let mut best: f64 = 0.0;
            for x in w {
                cum += x;
                best = best.max(cum.abs());
            }
            best
        }
        Metric::Tv => w.iter().filter(|x| **x > 0.0).sum(),
    }
}

pub(crate) fn advantage_weights(w1: &[f64], w2: &[f64]) -> f64 {
    // Σ_j w2[j] · Σ_{k>=j} w1[k], accumulated from the top of the grid.
    let mut survivor = 0.0;
    let mut total = 0.0;
    for (a, b) in w1.iter().zip(w2).rev() {
        survivor += a;
        total += b * survivor;
    }
    total
}

/// Exact Wp between grid measures: the quantile functions are step functions,
/// so merging both cumulative breakpoint sequences gives the integral.
fn wp_weights(grid: &ReturnGrid, a: &[f64], b: &[f64], p: f64) -> f64 {
    let n = a.len();
    let next_support = |w: &[f64], from: usize| (from..n).find(|&k| w[k] > 0.0);
    let (Some(mut i), Some(mut j)) = (next_support(a, 0), next_support(b, 0)) else {
        return 0.0;
    };
    let mut end_a = a[i];
    let mut end_b = b[j];
    let mut u = 0.0;
    let mut total = 0.0;
    loop {
        let next = end_a.min(end_b);
        if next > u {
            let gap = (grid.atom(i) - grid.atom(j)).abs();
            total += (next - u) * gap.powf(p);
            u = next;
        }
        let mut advanced = false;
        if end_a <= next {
            match next_support(a, i + 1) {
                Some(k) => {
                    i = k;
                    end_a += a[k];
                    advanced = true;
                }
                None => end_a = f64::INFINITY,
            }
        }
        if end_b <= next {
            match next_support(b, j + 1) {
                Some(k) => {
                    j = k;
                    end_b += b[k];
                    advanced = true;
                }
                None => end_b = f64::INFINITY,
            }
        }
        if !advanced {
            break;
        }
    }
    total.powf(1.0 / p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(k: usize, gamma: f64) -> ReturnGrid {
        ReturnGrid::new(k, gamma).unwrap()
    }

    fn measure(g: ReturnGrid, w: &[f64]) -> CategoricalMeasure {
        CategoricalMeasure::new(g, w.to_vec()).unwrap()
    }

    fn uniform_0_2(g: ReturnGrid) -> CategoricalMeasure {
        CategoricalMeasure::from_cdf(g, |x| (x / 2.0).clamp(0.0, 1.0)).unwrap()
    }

    fn random_measure(g: ReturnGrid, rng: &mut ChaCha8Rng) -> CategoricalMeasure {
        let w: Vec<f64> = (0..g.num_atoms()).map(|_| rng.random::<f64>()).collect();
        CategoricalMeasure::from_unnormalized(g, w).unwrap()
    }

    #[test]
    fn grid_layout() {
        let g = grid(4, 0.5);
        assert_eq!(g.num_atoms(), 5);
        assert_eq!(g.atom(0), 0.0);
        assert!((g.spacing() - 0.4).abs() < 1e-15);
        assert!(g.upper() < g.return_bound());
        assert!(ReturnGrid::new(0, 0.5).is_err());
        assert!(ReturnGrid::new(3, 1.0).is_err());
    }

    #[test]
    fn dirac_on_atom_and_midpoint() {
        let g = grid(4, 0.5);
        let on = CategoricalMeasure::dirac(g, g.atom(2)).unwrap();
        assert_eq!(on.weights(), &[0.0, 0.0, 1.0, 0.0, 0.0]);
        let mid = CategoricalMeasure::dirac(g, 0.5 * (g.atom(1) + g.atom(2))).unwrap();
        for (w, e) in mid.weights().iter().zip([0.0, 0.5, 0.5, 0.0, 0.0]) {
            assert!((w - e).abs() < 1e-12);
        }
        let fine = grid(1000, 0.5);
        let m = CategoricalMeasure::dirac(fine, 0.7).unwrap();
        assert!((m.mean() - 0.7).abs() < 1e-12);
        assert!(matches!(
            CategoricalMeasure::dirac(g, g.upper() + 0.01),
            Err(Error::OutOfRange { .. })
        ));
        assert!(CategoricalMeasure::dirac(g, -0.1).is_err());
    }

    #[test]
    fn pushforward_examples() {
        let g = grid(50, 0.7);
        let d0 = CategoricalMeasure::atom(g, 0).unwrap();
        assert_eq!(d0.pushforward_affine(0.0), d0);
        let z = SignedCategorical::zeros(g).pushforward_affine(0.3);
        assert!(z.weights().iter().all(|w| *w == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let k = rng.random_range(0..=g.max_index());
            let r: f64 = rng.random();
            let target = r + g.gamma() * g.atom(k);
            if target >= g.upper() {
                continue;
            }
            let pushed = CategoricalMeasure::atom(g, k).unwrap().pushforward_affine(r);
            assert!((pushed.mean() - target).abs() < 1e-12);
        }
        // On-atom target.
        let k = 10;
        let r = g.atom(12) - g.gamma() * g.atom(k);
        let pushed = CategoricalMeasure::atom(g, k).unwrap().pushforward_affine(r);
        assert!((pushed.weights()[12] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pushforward_clips_at_top() {
        let g = grid(10, 0.9);
        let top = CategoricalMeasure::atom(g, 10).unwrap().pushforward_affine(1.0);
        assert_eq!(top.weights()[10], 1.0);
    }

    #[test]
    fn mix_examples() {
        let g = grid(4, 0.5);
        let mu = measure(g, &[0.1, 0.2, 0.3, 0.2, 0.2]);
        match mix(&[(1.0, &mu)]).unwrap() {
            Mixture::Probability(m) => assert_eq!(m, mu),
            other => panic!("{other:?}"),
        }
        let a = CategoricalMeasure::atom(g, 0).unwrap();
        let b = CategoricalMeasure::atom(g, 2).unwrap();
        let half = mix(&[(0.5, &a), (0.5, &b)]).unwrap();
        assert_eq!(half.weights(), &[0.5, 0.0, 0.5, 0.0, 0.0]);
        match mix(&[(1.0, &mu), (-1.0, &mu)]).unwrap() {
            Mixture::Signed(s) => assert!(s.weights().iter().all(|w| *w == 0.0)),
            other => panic!("{other:?}"),
        }
        assert!(mix(&[(2.0, &mu)]).is_err());
        let other = CategoricalMeasure::atom(grid(4, 0.6), 0).unwrap();
        assert!(matches!(
            mix(&[(0.5, &mu), (0.5, &other)]),
            Err(Error::IncompatibleGrid)
        ));
    }

    #[test]
    fn w1_examples() {
        let g = grid(20, 0.5);
        let mu = uniform_0_2(g);
        assert_eq!(w1(&mu, &mu).unwrap(), 0.0);
        let d0 = CategoricalMeasure::atom(g, 0).unwrap();
        let d7 = CategoricalMeasure::atom(g, 7).unwrap();
        assert!((w1(&d0, &d7).unwrap() - g.atom(7)).abs() < 1e-12);

        let fine = grid(1000, 0.5);
        let u = uniform_0_2(fine);
        let one = CategoricalMeasure::dirac(fine, 1.0).unwrap();
        assert!((w1(&u, &one).unwrap() - 0.5).abs() < 2.0 * fine.spacing());

        let other = CategoricalMeasure::atom(grid(20, 0.6), 0).unwrap();
        assert!(matches!(w1(&d0, &other), Err(Error::IncompatibleGrid)));
    }

    #[test]
    fn wp_examples() {
        let g = grid(30, 0.8);
        let d0 = CategoricalMeasure::atom(g, 0).unwrap();
        let d9 = CategoricalMeasure::atom(g, 9).unwrap();
        assert!((wp(&d0, &d9, 2.0).unwrap() - g.atom(9)).abs() < 1e-12);
        let mu = uniform_0_2(g);
        for p in [1.0, 2.0, 3.5] {
            assert_eq!(wp(&mu, &mu, p).unwrap(), 0.0);
        }
        assert!(wp(&d0, &d9, 0.5).is_err());

        let top = g.nearest(g.return_bound());
        for q in [0.1, 0.37, 0.5, 0.93] {
            let mut a = vec![0.0; g.num_atoms()];
            a[0] = 0.5;
            a[top] = 0.5;
            let mut b = vec![0.0; g.num_atoms()];
            b[0] = 1.0 - q;
            b[top] = q;
            let (a, b) = (measure(g, &a), measure(g, &b));
            for p in [1.0, 2.0, 3.0] {
                let exact = g.return_bound() * (q - 0.5_f64).abs().powf(1.0 / p);
                assert!((wp(&a, &b, p).unwrap() - exact).abs() <= g.spacing());
            }
        }
    }

    #[test]
    fn wp_one_matches_w1() {
        let g = grid(60, 0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let a = random_measure(g, &mut rng);
            let b = random_measure(g, &mut rng);
            assert!((wp(&a, &b, 1.0).unwrap() - w1(&a, &b).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn ks_and_tv_examples() {
        let g = grid(10, 0.5);
        let mu = uniform_0_2(g);
        assert_eq!(ks(&mu, &mu).unwrap(), 0.0);
        assert_eq!(tv(&mu, &mu).unwrap(), 0.0);
        let d0 = CategoricalMeasure::atom(g, 0).unwrap();
        let d4 = CategoricalMeasure::atom(g, 4).unwrap();
        assert_eq!(ks(&d0, &d4).unwrap(), 1.0);
        assert_eq!(tv(&d0, &d4).unwrap(), 1.0);
        let mut a = vec![0.0; 11];
        a[0] = 0.5;
        a[10] = 0.5;
        let mut b = vec![0.0; 11];
        b[0] = 0.6;
        b[10] = 0.4;
        let (a, b) = (measure(g, &a), measure(g, &b));
        assert!((ks(&a, &b).unwrap() - 0.1).abs() < 1e-12);
        assert!((tv(&a, &b).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn signed_norms() {
        let g = grid(12, 0.7);
        let zero = SignedCategorical::zeros(g);
        for kind in Metric::ALL {
            assert_eq!(zero.norm(kind), 0.0);
        }
        let mut w = vec![0.0; 13];
        w[0] = 0.3;
        w[1] = -0.3;
        let s = SignedCategorical::new(g, w).unwrap();
        assert!((s.norm(Metric::Tv) - 0.3).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let a = random_measure(g, &mut rng);
            let b = random_measure(g, &mut rng);
            let d = SignedCategorical::difference(&a, &b).unwrap();
            for kind in Metric::ALL {
                let direct = distance(kind, &a, &b).unwrap();
                assert!((d.norm(kind) - direct).abs() < 1e-10);
            }
        }
        assert!(matches!(
            SignedCategorical::new(g, vec![0.1; 13]),
            Err(Error::NonZeroTotal { .. })
        ));
    }

    #[test]
    fn moments() {
        let g = grid(1000, 0.5);
        let d = CategoricalMeasure::atom(g, 37).unwrap();
        assert!((d.moment(3) - g.atom(37).powi(3)).abs() < 1e-12);
        assert_eq!(SignedCategorical::zeros(g).moment(2), 0.0);
        let u = uniform_0_2(g);
        assert!((u.moment(2) - 4.0 / 3.0).abs() < 4.0 * g.spacing());
    }

    #[test]
    fn quantiles() {
        let g = grid(1000, 0.5);
        let d = CategoricalMeasure::atom(g, 12).unwrap();
        for p in [0.01, 0.5, 0.99] {
            assert_eq!(d.quantile(p), g.atom(12));
        }
        let mut w = vec![0.0; g.num_atoms()];
        w[0] = 0.5;
        w[2] = 0.5;
        assert_eq!(measure(g, &w).quantile(0.5), 0.0);
        let u = uniform_0_2(g);
        assert!((u.quantile(0.25) - 0.5).abs() < 2.0 * g.spacing());
    }

    #[test]
    fn advantage_examples() {
        let g = grid(8, 0.5);
        let d0 = CategoricalMeasure::atom(g, 0).unwrap();
        let d2 = CategoricalMeasure::atom(g, 2).unwrap();
        assert_eq!(uniform_advantage(&d2, &d0).unwrap(), 1.0);
        assert_eq!(uniform_advantage(&d0, &d0).unwrap(), 1.0);
        let mut w = vec![0.0; 9];
        w[0] = 0.5;
        w[2] = 0.5;
        let m = measure(g, &w);
        // Outcome pairs (0,0) (0,2) (2,0) (2,2): three of four satisfy >=.
        let enumerated = [(0, 0), (0, 2), (2, 0), (2, 2)].iter().filter(|(a, b)| a >= b).count() as f64 / 4.0;
        assert!((uniform_advantage(&m, &m).unwrap() - enumerated).abs() < 1e-15);
        assert!((enumerated - 0.75).abs() < 1e-15);
    }

    #[test]
    fn advantage_complement_identity() {
        let g = grid(15, 0.6);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let a = random_measure(g, &mut rng);
            let b = random_measure(g, &mut rng);
            let sum = uniform_advantage(&a, &b).unwrap() + strict_advantage(&b, &a).unwrap();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn density_examples() {
        let g = grid(100, 0.5);
        let u = CategoricalMeasure::uniform(g);
        for window in [1, 5, 21] {
            let d = u.density_estimate(window).unwrap();
            let expected = 1.0 / (g.num_atoms() as f64 * g.spacing());
            assert!(d.iter().all(|x| (x - expected).abs() < 1e-9));
        }
        let spike = CategoricalMeasure::atom(g, 40).unwrap();
        let d = spike.density_estimate(1).unwrap();
        assert!((d[40] - 1.0 / g.spacing()).abs() < 1e-9);
        assert!(d.iter().enumerate().all(|(k, x)| k == 40 || *x == 0.0));
        assert!(u.density_estimate(4).is_err());
        assert!(u.density_estimate(0).is_err());

        let fine = grid(1000, 0.5);
        let uf = uniform_0_2(fine);
        let d = uf.density_estimate(21).unwrap();
        for (k, v) in d.iter().enumerate().take(950).skip(50) {
            assert!((v - 0.5).abs() < 0.02, "k={k} d={v}");
        }
        let mass: f64 = d.iter().sum::<f64>() * fine.spacing();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cdf_view() {
        let g = grid(4, 0.5);
        let m = measure(g, &[0.1, 0.2, 0.3, 0.2, 0.2]);
        let cdf = m.cdf();
        assert!((cdf.at(2) - 0.6).abs() < 1e-15);
        assert!((cdf.evaluate(g.atom(2) + 0.01) - 0.6).abs() < 1e-15);
        assert_eq!(cdf.evaluate(-1.0), 0.0);
        assert!((cdf.values()[4] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn construction_validates() {
        let g = grid(2, 0.5);
        assert!(CategoricalMeasure::new(g, vec![0.5, 0.5]).is_err());
        assert!(CategoricalMeasure::new(g, vec![0.5, 0.6, -0.1]).is_err());
        assert!(CategoricalMeasure::new(g, vec![0.5, 0.2, 0.2]).is_err());
        let m = CategoricalMeasure::from_unnormalized(g, vec![1.0, 1.0, 2.0]).unwrap();
        assert_eq!(m.weights(), &[0.25, 0.25, 0.5]);
    }
}
