//! Sup-state error of the plug-in fixed point shrinks like `n^{-1/2}`.

use distrl::experiments::{run_convergence, ExperimentConfig, MdpSource, RandomSpec, SampleSize};

fn main() -> distrl::Result<()> {
    let config = ExperimentConfig {
        mdp: Some(MdpSource::Random(RandomSpec {
            states: 5,
            actions: 2,
            gamma: 0.8,
            seed: 0,
        })),
        grid_k: 300,
        n: [25, 100, 400, 1600].into_iter().map(SampleSize::Finite).collect(),
        reps: 10,
        ..ExperimentConfig::default()
    };
    let result = run_convergence(&config)?;
    for row in &result.summary {
        println!(
            "n {:>5} {:>3}: mean error {:.4} (sd {:.4})",
            row.n.to_string(),
            row.metric.name(),
            row.mean,
            row.std
        );
    }
    for slope in &result.slopes {
        println!("{:>3} log-log slope {:.3}", slope.metric.name(), slope.slope);
    }
    Ok(())
}
