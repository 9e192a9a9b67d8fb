use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use distrl::experiments::{
    cmd_convergence, cmd_coverage, cmd_ddp, cmd_validate, parse_reals, parse_sample_sizes, ConfigOverrides,
    ExperimentConfig, MdpSource, RandomSpec,
};

#[derive(Parser)]
#[command(name = "distrl", version, about = "Distributional policy evaluation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fixed point by distributional dynamic programming.
    Ddp(Common),
    /// Empirical DDP error against the truth across sample sizes.
    Convergence(Common),
    /// Coverage of confidence balls and functional intervals.
    Coverage(Common),
    /// Check a model file.
    Validate {
        path: Option<PathBuf>,
        #[arg(long)]
        mdp: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON config; flags take precedence over its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with = "random")]
    mdp: Option<PathBuf>,
    /// S,A,gamma,seed
    #[arg(long, value_parser = |s: &str| s.parse::<RandomSpec>().map_err(|e| e.to_string()))]
    random: Option<RandomSpec>,
    #[arg(long)]
    grid_k: Option<usize>,
    /// Comma-separated sample sizes; `inf` uses the true kernel.
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    mc_draws: Option<usize>,
    #[arg(long)]
    tail_tol: Option<f64>,
    #[arg(long)]
    ddp_tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated discounts to sweep.
    #[arg(long)]
    gammas: Option<String>,
    #[arg(long)]
    state: Option<usize>,
    /// LO,HI of a uniform law to compare DDP iterates against.
    #[arg(long, value_parser = parse_pair)]
    reference_uniform: Option<(f64, f64)>,
}

fn parse_pair(text: &str) -> Result<(f64, f64), String> {
    match parse_reals(text).map_err(|e| e.to_string())?.as_slice() {
        [lo, hi] => Ok((*lo, *hi)),
        _ => Err(format!("expected LO,HI, got {text:?}")),
    }
}

impl Common {
    fn config(self) -> distrl::Result<ExperimentConfig> {
        let base = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        let mdp = match (self.mdp, self.random) {
            (Some(path), _) => Some(MdpSource::File(path)),
            (None, Some(spec)) => Some(MdpSource::Random(spec)),
            (None, None) => None,
        };
        let config = ConfigOverrides {
            mdp,
            grid_k: self.grid_k,
            n: self.n.as_deref().map(parse_sample_sizes).transpose()?,
            reps: self.reps,
            alpha: self.alpha,
            mc_draws: self.mc_draws,
            tail_tol: self.tail_tol,
            ddp_tol: self.ddp_tol,
            max_iters: self.max_iters,
            seed: self.seed,
            out: self.out,
            gammas: self.gammas.as_deref().map(parse_reals).transpose()?,
            state: self.state,
            reference_uniform: self.reference_uniform,
        }
        .apply(base);
        config.validate()?;
        Ok(config)
    }
}

fn run(command: Command) -> distrl::Result<ExitCode> {
    match command {
        Command::Ddp(common) => {
            let config = common.config()?;
            let result = cmd_ddp(&config)?;
            if result.converged {
                eprintln!("converged after {} iterations", result.iterations);
            } else {
                eprintln!(
                    "incomplete: stopped after {} iterations without reaching the tolerance",
                    result.iterations
                );
            }
        }
        Command::Convergence(common) => {
            let result = cmd_convergence(&common.config()?)?;
            for slope in &result.slopes {
                eprintln!("gamma {} {}: slope {:.3}", slope.gamma, slope.metric, slope.slope);
            }
        }
        Command::Coverage(common) => {
            let result = cmd_coverage(&common.config()?)?;
            for s in &result.summary {
                eprintln!(
                    "gamma {} n {} {}: coverage {:.3}, mean size {:.4}",
                    s.gamma,
                    s.n,
                    s.target.label(),
                    s.coverage,
                    s.mean_size
                );
            }
        }
        Command::Validate { path, mdp } => {
            let Some(path) = path.or(mdp) else {
                return Err(distrl::Error::InvalidArgument("validate needs a model path".into()));
            };
            let report = cmd_validate(path)?;
            println!("{report}");
            if !report.valid {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
