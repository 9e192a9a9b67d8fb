//! Solve `(I - T) D = ν` by truncated Neumann series and by an exact dense
//! solve on the zero-mass subspace, and compare.

use distrl::bellman::{
    ddp, exact_inverse_apply, neumann_inverse, operator_matrix, BellmanOperator, ReturnDistributionVector,
};
use distrl::inference::{build_g, sample_z};
use distrl::mdp::random_mdp;
use distrl::measures::{CategoricalMeasure, Metric, ReturnGrid};

fn main() -> distrl::Result<()> {
    let (mdp, policy) = random_mdp(3, 2, 0.7, 2)?;
    let grid = ReturnGrid::new(60, mdp.gamma())?;
    let op = BellmanOperator::from_mdp(&mdp, &policy, grid)?;
    let start = ReturnDistributionVector::constant(3, &CategoricalMeasure::atom(grid, 0)?);
    let eta = ddp(&op, &start, 10_000, 1e-12)?.eta;
    let nu = build_g(&sample_z(op.transition(), 4), &eta, &op)?;

    println!("TV size of the right-hand side: {:.3e}", nu.sup_norm(Metric::Tv));
    let matrix = operator_matrix(&op)?;
    let exact = exact_inverse_apply(&matrix, &nu)?;
    for tail_tol in [1e-2, 1e-4, 1e-8] {
        let series = neumann_inverse(&op, &nu, tail_tol)?;
        let gap = series.value.combine(1.0, &exact, -1.0)?.sup_norm(Metric::Tv);
        println!(
            "tail tolerance {tail_tol:.0e}: depth {:>3}, TV gap to exact {gap:.3e}",
            series.depth
        );
    }
    Ok(())
}
