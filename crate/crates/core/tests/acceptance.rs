//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line.

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use distrl::bellman::{
    classical_value, ddp, exact_inverse_apply, neumann_inverse, operator_matrix, BellmanOperator,
    ReturnDistributionVector, SignedVector,
};
use distrl::experiments::{
    run_convergence, run_coverage, CoverageResult, CoverageTarget, ExperimentConfig, MdpSource, RandomSpec, SampleSize,
};
use distrl::inference::{sample_z, Functional};
use distrl::mdp::{random_mdp, Policy, RewardSpec, TabularMdp, TransitionTensor};
use distrl::measures::{self, CategoricalMeasure, GridWeights, Metric, ReturnGrid};
use distrl::oracle::{cross_check, rollout_vs_ddp, DdpSettings, RolloutConfig};
use distrl::seed;
use distrl::Error;
use rand::Rng;

// Written straight to the stderr handle so the line shows without `--nocapture`.
fn report(criterion: u32, pass: bool, detail: &str) {
    let _ = writeln!(
        std::io::stderr(),
        "criterion {criterion:>2} {}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn example_one() -> TabularMdp {
    TabularMdp::new(
        0.5,
        TransitionTensor::new(1, 1, vec![1.0]).unwrap(),
        vec![RewardSpec::Bernoulli { q: 0.5 }],
    )
    .unwrap()
}

fn bottom(grid: ReturnGrid, states: usize) -> ReturnDistributionVector {
    ReturnDistributionVector::constant(states, &CategoricalMeasure::atom(grid, 0).unwrap())
}

#[test]
fn criterion_01_closed_form_fixed_point() {
    let start = Instant::now();
    let mdp = example_one();
    let grid = ReturnGrid::new(1000, 0.5).unwrap();
    let op = BellmanOperator::from_mdp(&mdp, &Policy::uniform(1, 1), grid).unwrap();
    let tol = 1e-8;
    let out = ddp(&op, &bottom(grid, 1), 100_000, tol).unwrap();
    let uniform = CategoricalMeasure::from_cdf(grid, |x| (x / 2.0).clamp(0.0, 1.0)).unwrap();
    let d = measures::w1(&out.eta.measure(0), &uniform).unwrap();
    let bound = 2.0 * grid.spacing() + tol / (1.0 - grid.gamma());
    let elapsed = start.elapsed();
    report(
        1,
        out.trace.converged && d <= bound && elapsed < Duration::from_secs(10),
        &format!(
            "w1 = {d:.3e} <= {bound:.3e}, {} iterations, {:.2?}",
            out.trace.steps.len(),
            elapsed
        ),
    );
}

fn random_measure(grid: ReturnGrid, rng: &mut seed::Rng) -> CategoricalMeasure {
    // Mix sparse and dense supports so both easy and hard cases occur.
    let n = grid.num_atoms();
    let mut w = vec![0.0; n];
    if rng.random::<bool>() {
        for _ in 0..rng.random_range(1..5) {
            w[rng.random_range(0..n)] += rng.random::<f64>();
        }
    } else {
        w.iter_mut().for_each(|x| *x = rng.random::<f64>().powi(3));
    }
    CategoricalMeasure::from_unnormalized(grid, w).unwrap()
}

#[test]
fn criterion_02_contraction() {
    let mut rng = seed::rng(2, &[]);
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for trial in 0..500u64 {
        let states = rng.random_range(1..6);
        let actions = rng.random_range(1..4);
        let gamma = rng.random_range(0.3..0.97);
        let k = rng.random_range(20..300);
        let (mdp, policy) = random_mdp(states, actions, gamma, trial).unwrap();
        let grid = ReturnGrid::new(k, gamma).unwrap();
        let op = BellmanOperator::from_mdp(&mdp, &policy, grid).unwrap();
        let eta = ReturnDistributionVector::new((0..states).map(|_| random_measure(grid, &mut rng)).collect()).unwrap();
        let other =
            ReturnDistributionVector::new((0..states).map(|_| random_measure(grid, &mut rng)).collect()).unwrap();
        let before = eta.sup_distance(&other, Metric::W1).unwrap();
        let after = op
            .apply(&eta)
            .unwrap()
            .sup_distance(&op.apply(&other).unwrap(), Metric::W1)
            .unwrap();
        if before == 0.0 {
            continue;
        }
        let ratio = after / before;
        worst = worst.max(ratio - gamma);
        if ratio > gamma + 4.0 * grid.spacing() / before {
            violations += 1;
        }
    }
    report(
        2,
        violations == 0,
        &format!("{violations} violations in 500 triples, max ratio - gamma = {worst:.3e}"),
    );
}

#[test]
fn criterion_03_wp_lower_bound_identity() {
    let start = Instant::now();
    let gamma = 0.9;
    let grid = ReturnGrid::new(1000, gamma).unwrap();
    let top = grid.nearest(1.0 / (1.0 - gamma));
    let two_point = |p_top: f64| {
        let mut w = vec![0.0; grid.num_atoms()];
        w[0] = 1.0 - p_top;
        w[top] += p_top;
        CategoricalMeasure::new(grid, w).unwrap()
    };
    let truth = two_point(0.5);
    let mut rng = seed::rng(3, &[]);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let p_hat: f64 = rng.random();
        let estimate = two_point(p_hat);
        for p in [1.0, 2.0, 3.0] {
            let closed = (p_hat - 0.5).abs().powf(1.0 / p) / (1.0 - gamma);
            worst = worst.max((measures::wp(&truth, &estimate, p).unwrap() - closed).abs());
        }
    }
    let elapsed = start.elapsed();
    let bound = 3.0 * grid.spacing();
    report(
        3,
        worst <= bound && elapsed < Duration::from_secs(5),
        &format!("max |wp - closed form| = {worst:.3e} <= {bound:.3e}, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_04_sample_size_rate() {
    let start = Instant::now();
    let config = ExperimentConfig {
        mdp: Some(MdpSource::Random(RandomSpec {
            states: 5,
            actions: 2,
            gamma: 0.9,
            seed: 0,
        })),
        grid_k: 1000,
        n: [10, 100, 1000, 10_000].map(SampleSize::Finite).to_vec(),
        reps: 20,
        seed: 4,
        ..ExperimentConfig::default()
    };
    let out = run_convergence(&config).unwrap();
    let slopes: Vec<(Metric, f64)> = out.slopes.iter().map(|s| (s.metric, s.slope)).collect();
    let elapsed = start.elapsed();
    let pass = slopes.len() == 3
        && slopes.iter().all(|(_, s)| (-0.65..=-0.35).contains(s))
        && elapsed < Duration::from_secs(300);
    let text: Vec<String> = slopes.iter().map(|(m, s)| format!("{m} {s:.3}")).collect();
    report(4, pass, &format!("slopes {}, {elapsed:.2?}", text.join(", ")));
}

#[test]
fn criterion_05_neumann_matches_exact_solve() {
    let mut worst: f64 = 0.0;
    let mut rng = seed::rng(5, &[]);
    for trial in 0..50u64 {
        let gamma = rng.random_range(0.5..0.95);
        let (mdp, policy) = random_mdp(2, 2, gamma, 500 + trial).unwrap();
        let grid = ReturnGrid::new(8, gamma).unwrap();
        let op = BellmanOperator::from_mdp(&mdp, &policy, grid).unwrap();
        let matrix = operator_matrix(&op).unwrap();
        let mut w: Vec<f64> = (0..18).map(|_| rng.random::<f64>() - 0.5).collect();
        for chunk in w.chunks_mut(9) {
            let mean = chunk.iter().sum::<f64>() / 9.0;
            chunk.iter_mut().for_each(|x| *x -= mean);
        }
        let nu = SignedVector::from_flat(grid, 2, w).unwrap();
        let exact = exact_inverse_apply(&matrix, &nu).unwrap();
        let series = neumann_inverse(&op, &nu, 1e-9).unwrap().value;
        for (a, b) in exact.as_slice().iter().zip(series.as_slice()) {
            worst = worst.max((a - b).abs());
        }
    }
    report(
        5,
        worst <= 1e-7,
        &format!("max weight difference {worst:.3e} over 50 inputs"),
    );
}

#[test]
fn criterion_06_gaussian_covariance() {
    let (mdp, _) = random_mdp(5, 2, 0.9, 6).unwrap();
    let p = mdp.sample_transitions(100, 6).unwrap().empirical_transition();
    let draws = 100_000;
    let dim = 5 * 2 * 5;
    let mut sum = vec![0.0; dim];
    let mut cross = vec![0.0; 10 * 25];
    let mut max_row_sum: f64 = 0.0;
    for d in 0..draws {
        let z = sample_z(&p, seed::derive_seed(6, &[d]));
        for s in 0..5 {
            for a in 0..2 {
                let row = z.row(s, a);
                max_row_sum = max_row_sum.max(row.iter().sum::<f64>().abs());
                let pair = s * 2 + a;
                for i in 0..5 {
                    sum[pair * 5 + i] += row[i];
                    for j in 0..5 {
                        cross[pair * 25 + i * 5 + j] += row[i] * row[j];
                    }
                }
            }
        }
    }
    let m = draws as f64;
    let mut worst: f64 = 0.0;
    for s in 0..5 {
        for a in 0..2 {
            let pair = s * 2 + a;
            let row = p.row(s, a);
            for i in 0..5 {
                for j in 0..5 {
                    let emp = cross[pair * 25 + i * 5 + j] / m - sum[pair * 5 + i] * sum[pair * 5 + j] / (m * m);
                    let expected = if i == j { row[i] } else { 0.0 } - row[i] * row[j];
                    worst = worst.max((emp - expected).abs());
                }
            }
        }
    }
    report(
        6,
        worst <= 0.01 && max_row_sum <= 1e-14,
        &format!("max covariance error {worst:.3e}, max |row sum| {max_row_sum:.1e}"),
    );
}

fn coverage() -> &'static (CoverageResult, Duration) {
    static RESULT: OnceLock<(CoverageResult, Duration)> = OnceLock::new();
    RESULT.get_or_init(|| {
        let start = Instant::now();
        let config = ExperimentConfig {
            mdp: Some(MdpSource::Random(RandomSpec {
                states: 5,
                actions: 2,
                gamma: 0.9,
                seed: 0,
            })),
            grid_k: 1000,
            n: vec![SampleSize::Finite(100)],
            reps: 200,
            alpha: 0.05,
            mc_draws: 1000,
            state: 0,
            seed: 0,
            ..ExperimentConfig::default()
        };
        let result = run_coverage(&config).unwrap();
        (result, start.elapsed())
    })
}

#[test]
fn criterion_07_ball_coverage() {
    let (result, elapsed) = coverage();
    let n = SampleSize::Finite(100);
    let mut pass = *elapsed < Duration::from_secs(900);
    let mut parts = Vec::new();
    for metric in Metric::ALL {
        let s = result.find(CoverageTarget::Ball(metric), n).unwrap();
        pass &= (0.90..=0.99).contains(&s.coverage);
        parts.push(format!("{metric} coverage {:.3} radius {:.4}", s.coverage, s.mean_size));
    }
    let w1 = result.find(CoverageTarget::Ball(Metric::W1), n).unwrap().mean_size;
    let relative = (w1 / 0.0804 - 1.0).abs();
    pass &= relative <= 0.35;
    parts.push(format!("W1 radius off paper by {:.0}%", 100.0 * relative));
    report(7, pass, &format!("{}, {elapsed:.1?}", parts.join("; ")));
}

#[test]
fn criterion_08_functional_coverage() {
    let (result, _) = coverage();
    let n = SampleSize::Finite(100);
    let mut pass = true;
    let mut parts = Vec::new();
    for f in [
        Functional::Variance,
        Functional::Quantile { p: 0.1 },
        Functional::Quantile { p: 0.9 },
    ] {
        let s = result.find(CoverageTarget::Functional(f), n).unwrap();
        pass &= (0.89..=0.99).contains(&s.coverage) && s.failures == 0;
        parts.push(format!(
            "{} coverage {:.3} width {:.4} ({} failures)",
            f.label(),
            s.coverage,
            s.mean_size,
            s.failures
        ));
    }
    report(8, pass, &parts.join("; "));
}

#[test]
fn criterion_09_mean_matches_classical_value() {
    let mut worst_excess = f64::NEG_INFINITY;
    let tol = 1e-8;
    for trial in 0..20u64 {
        let gamma = [0.7, 0.8, 0.9, 0.97][trial as usize % 4];
        let (mdp, policy) = random_mdp(5, 2, gamma, 900 + trial).unwrap();
        let p_hat = mdp.sample_transitions(100, trial).unwrap().empirical_transition();
        let estimated = mdp.with_transition(p_hat).unwrap();
        let grid = ReturnGrid::new(1000, gamma).unwrap();
        let op = BellmanOperator::from_mdp(&estimated, &policy, grid).unwrap();
        let eta = ddp(&op, &bottom(grid, 5), 100_000, tol).unwrap().eta;
        let values = classical_value(&estimated, &policy).unwrap();
        let bound = tol / (1.0 - gamma) + 2.0 * grid.spacing() / (1.0 - gamma);
        for (s, v) in values.iter().enumerate() {
            worst_excess = worst_excess.max((eta.measure(s).mean() - v).abs() - bound);
        }
    }
    report(
        9,
        worst_excess <= 0.0,
        &format!("largest (error - bound) = {worst_excess:.3e} over 20 models"),
    );
}

#[test]
fn criterion_10_rollout_oracle() {
    let mut pass = true;
    let mut parts = Vec::new();
    let settings = DdpSettings {
        max_index: 1000,
        tol: 1e-8,
        max_iters: 100_000,
    };
    let config = RolloutConfig {
        horizon: 40,
        num_trajectories: 100_000,
        seed: 10,
    };
    match rollout_vs_ddp(&example_one(), &Policy::uniform(1, 1), 0, &config, &settings) {
        Ok(r) => parts.push(format!("example w1 {:.2e}/{:.2e}", r.w1, r.budget.total)),
        Err(e) => {
            pass = false;
            parts.push(format!("example: {e:.200}"));
        }
    }
    for trial in 0..5u64 {
        let (mdp, policy) = random_mdp(5, 2, 0.9, 1000 + trial).unwrap();
        let config = RolloutConfig {
            horizon: 200,
            num_trajectories: 100_000,
            seed: trial,
        };
        match rollout_vs_ddp(&mdp, &policy, 0, &config, &settings) {
            Ok(r) => parts.push(format!("random {trial} w1 {:.2e}/{:.2e}", r.w1, r.budget.total)),
            Err(e) => {
                pass = false;
                parts.push(format!(
                    "random {trial}: {}",
                    e.to_string().chars().take(200).collect::<String>()
                ));
            }
        }
    }
    let mismatched = example_one().with_gamma(0.6).unwrap();
    let flagged = matches!(
        cross_check(
            &example_one(),
            &mismatched,
            &Policy::uniform(1, 1),
            0,
            &config,
            &settings
        ),
        Err(Error::Discrepancy(_))
    );
    pass &= flagged;
    parts.push(format!("mismatched discount flagged: {flagged}"));
    report(10, pass, &parts.join("; "));
}
