//! Estimate the transition kernel of a random model from `n` samples per
//! state-action pair, then build W1, KS and TV confidence balls around the
//! plug-in return distribution and check whether they contain the truth.

use distrl::bellman::{ddp, BellmanOperator, ReturnDistributionVector};
use distrl::inference::{confidence_ball, McSettings};
use distrl::mdp::random_mdp;
use distrl::measures::{CategoricalMeasure, Metric, ReturnGrid};

fn main() -> distrl::Result<()> {
    let (mdp, policy) = random_mdp(5, 2, 0.9, 0)?;
    let grid = ReturnGrid::new(200, mdp.gamma())?;
    let n = 100;
    let start = ReturnDistributionVector::constant(mdp.num_states(), &CategoricalMeasure::atom(grid, 0)?);

    let op = BellmanOperator::from_mdp(&mdp, &policy, grid)?;
    let truth = ddp(&op, &start, 10_000, 1e-10)?.eta;

    let p_hat = mdp.sample_transitions(n, 42)?.empirical_transition();
    let op_hat = op.with_transition(p_hat)?;
    let eta_hat = ddp(&op_hat, &start, 10_000, 1e-10)?.eta;

    let mc = McSettings {
        draws: 500,
        tail_tol: 1e-4,
        seed: 7,
    };
    for kind in Metric::ALL {
        let ball = confidence_ball(&eta_hat, &op_hat, 0, kind, 0.05, n, &mc)?;
        println!(
            "{:>3} ball: radius {:.4}, contains truth: {}",
            kind.name(),
            ball.radius,
            ball.contains(&truth.measure(0))?
        );
    }
    Ok(())
}
