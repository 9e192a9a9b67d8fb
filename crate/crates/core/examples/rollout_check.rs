//! Compare DDP against Monte Carlo rollouts, within an explicit error budget.
//! Running DDP on the wrong discount is caught.

use distrl::mdp::random_mdp;
use distrl::oracle::{cross_check, rollout_vs_ddp, DdpSettings, RolloutConfig};
use distrl::Error;

fn main() -> distrl::Result<()> {
    let (mdp, policy) = random_mdp(4, 2, 0.8, 5)?;
    let config = RolloutConfig {
        horizon: 120,
        num_trajectories: 50_000,
        seed: 9,
    };
    let settings = DdpSettings {
        max_index: 400,
        tol: 1e-10,
        max_iters: 10_000,
    };

    let report = rollout_vs_ddp(&mdp, &policy, 0, &config, &settings)?;
    println!(
        "w1 {:.3e} within budget {:.3e} (monte carlo {:.1e}, truncation {:.1e}, discretization {:.1e})",
        report.w1,
        report.budget.total,
        report.budget.monte_carlo,
        report.budget.truncation,
        report.budget.discretization
    );

    match cross_check(
        &mdp.with_gamma(0.5)?,
        &mdp.with_gamma(0.6)?,
        &policy,
        0,
        &config,
        &settings,
    ) {
        Err(Error::Discrepancy(report)) => println!(
            "mismatched discount flagged: w1 {:.3e} > {:.3e}",
            report.w1, report.budget.total
        ),
        Ok(report) => println!("unexpectedly within budget: {report}"),
        Err(e) => return Err(e),
    }
    Ok(())
}
