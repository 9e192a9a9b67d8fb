//! Delta-method intervals for the mean, variance, quantiles and the
//! probability that one policy's return beats another's.

use distrl::bellman::{ddp, BellmanOperator, ReturnDistributionVector};
use distrl::inference::{advantage_ci, moment_ci, quantile_ci, variance_ci, FunctionalCI, McSettings};
use distrl::mdp::{random_mdp, Policy};
use distrl::measures::{self, CategoricalMeasure, GridWeights, ReturnGrid};

fn show(ci: &FunctionalCI, truth: f64) {
    println!(
        "{:>18}: [{:.4}, {:.4}] around {:.4}; truth {:.4} covered {}",
        ci.functional.label(),
        ci.lower,
        ci.upper,
        ci.point,
        truth,
        ci.contains(truth)
    );
}

fn main() -> distrl::Result<()> {
    let (mdp, policy) = random_mdp(5, 2, 0.8, 3)?;
    let grid = ReturnGrid::new(300, mdp.gamma())?;
    let (n, alpha, state) = (500, 0.05, 0);
    let mc = McSettings {
        draws: 500,
        tail_tol: 1e-4,
        seed: 1,
    };
    let start = ReturnDistributionVector::constant(mdp.num_states(), &CategoricalMeasure::atom(grid, 0)?);
    let solve = |op: &BellmanOperator| ddp(op, &start, 10_000, 1e-10).map(|o| o.eta);

    let op = BellmanOperator::from_mdp(&mdp, &policy, grid)?;
    let truth = solve(&op)?.measure(state);
    let op_hat = op.with_transition(mdp.sample_transitions(n, 11)?.empirical_transition())?;
    let eta_hat = solve(&op_hat)?;

    show(&moment_ci(&op_hat, &eta_hat, state, 1, alpha, n, &mc)?, truth.mean());
    show(&variance_ci(&op_hat, &eta_hat, state, alpha, n, &mc)?, truth.variance());
    for p in [0.1, 0.5, 0.9] {
        let ci = quantile_ci(&op_hat, &eta_hat, state, p, alpha, n, 21, &mc)?;
        show(&ci, truth.quantile(p));
    }

    // A greedy alternative policy, estimated from its own independent data.
    let greedy: Vec<f64> = (0..mdp.num_states())
        .flat_map(|s| {
            let best = (0..mdp.num_actions())
                .max_by(|a, b| mdp.reward(s, *a).mean().total_cmp(&mdp.reward(s, *b).mean()))
                .unwrap_or(0);
            (0..mdp.num_actions()).map(move |a| if a == best { 1.0 } else { 0.0 })
        })
        .collect();
    let greedy = Policy::new(mdp.num_states(), mdp.num_actions(), greedy)?;
    let op2 = BellmanOperator::from_mdp(&mdp, &greedy, grid)?;
    let truth2 = solve(&op2)?.measure(state);
    let op2_hat = op2.with_transition(mdp.sample_transitions(n, 12)?.empirical_transition())?;
    let eta2_hat = solve(&op2_hat)?;
    let ci = advantage_ci(&eta_hat, &op_hat, &eta2_hat, &op2_hat, state, alpha, n, &mc)?;
    show(&ci, measures::uniform_advantage(&truth, &truth2)?);
    Ok(())
}
