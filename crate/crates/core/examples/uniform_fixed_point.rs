//! Fair-coin rewards with discount 1/2 have a Uniform[0, 2] return.
//! DDP from a point mass at zero converges to the projection of that law.

use distrl::bellman::{ddp_observed, BellmanOperator, ReturnDistributionVector};
use distrl::mdp::{Policy, RewardSpec, TabularMdp, TransitionTensor};
use distrl::measures::{self, CategoricalMeasure, GridWeights, ReturnGrid};

fn main() -> distrl::Result<()> {
    let mdp = TabularMdp::new(
        0.5,
        TransitionTensor::new(1, 1, vec![1.0])?,
        vec![RewardSpec::Bernoulli { q: 0.5 }],
    )?;
    let grid = ReturnGrid::new(1000, mdp.gamma())?;
    let op = BellmanOperator::from_mdp(&mdp, &Policy::uniform(1, 1), grid)?;
    let uniform = CategoricalMeasure::from_cdf(grid, |x| (x / 2.0).clamp(0.0, 1.0))?;

    let start = ReturnDistributionVector::constant(1, &CategoricalMeasure::atom(grid, 0)?);
    let out = ddp_observed(&op, &start, 200, 1e-10, |t, eta| {
        if t % 5 == 0 {
            if let Ok(w1) = measures::w1(&eta.measure(0), &uniform) {
                println!("iteration {t:>3}: W1 to uniform {w1:.3e}");
            }
        }
    })?;
    let eta = out.eta.measure(0);
    println!(
        "converged = {} after {} iterations; final W1 {:.3e} (grid spacing {:.3e})",
        out.trace.converged,
        out.trace.steps.len(),
        measures::w1(&eta, &uniform)?,
        grid.spacing()
    );
    println!(
        "mean {:.6}, variance {:.6} (exact 1 and 1/3)",
        eta.mean(),
        eta.variance()
    );
    Ok(())
}
