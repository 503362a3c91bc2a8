//! `byzsim`: run Byzantine-resilient decentralized SGD experiments.
//!
//! A run is defined by a TOML config and/or flags; list-valued config keys
//! (`nodes`, `connection_ratio`, `byzantine_ratio`, `rule`, `attack`)
//! become sweep axes. Each run writes `run_<id>.csv`; the sweep writes
//! `summary.csv` and `timing.csv`. Exit code 0 iff every run completed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use byzsim_cli::execute::execute;
use byzsim_cli::plan::{parse_config_file, ExperimentPlan, Overrides};

#[derive(Parser, Debug)]
#[command(
    name = "byzsim",
    about = "Byzantine-resilient decentralized SGD experiment runner"
)]
struct Args {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Base seed; repetition r runs with seed + r.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory for CSV files.
    #[arg(long)]
    out: Option<String>,

    /// Aggregation rule: average|dkrum|dmedian|dbulyan|bridge|ubar.
    #[arg(long)]
    rule: Option<String>,

    /// Attack: none|gaussian|bitflip|mhamdi|targeted.
    #[arg(long)]
    attack: Option<String>,

    /// Benign node count.
    #[arg(long)]
    nodes: Option<usize>,

    /// Probability that a node pair shares an edge, in (0, 1].
    #[arg(long)]
    connection_ratio: Option<f64>,

    /// Byzantine nodes / all nodes, in [0, 1).
    #[arg(long)]
    byzantine_ratio: Option<f64>,

    /// GUF mixing weight for the robust rules, in [0, 1].
    #[arg(long)]
    alpha: Option<f64>,

    /// Assumed benign-neighbor ratio rho_i, in (0, 1].
    #[arg(long)]
    rho: Option<f64>,

    /// Centralized fault tolerance feeding the n_hat bound, in (0, 1).
    #[arg(long)]
    rho_central: Option<f64>,

    /// Initial learning rate.
    #[arg(long)]
    lr0: Option<f64>,

    /// Enable the fading schedule lr0 * 20 / (20 + epoch).
    #[arg(long)]
    fading: Option<bool>,

    #[arg(long)]
    batch_size: Option<usize>,

    #[arg(long)]
    iterations: Option<usize>,

    /// Evaluation cadence in iterations (0 = once per epoch-equivalent).
    #[arg(long)]
    eval_every: Option<usize>,

    /// Model: softmax|mlp (quadratic has no accuracy metric).
    #[arg(long)]
    model: Option<String>,

    /// Dataset: synthetic|mnist.
    #[arg(long)]
    dataset: Option<String>,

    /// Keep only the first N samples of each MNIST split (0 = all).
    #[arg(long)]
    mnist_limit: Option<usize>,

    /// Directory holding the MNIST IDX files.
    #[arg(long)]
    mnist_dir: Option<String>,

    /// Gaussian attack standard deviation.
    #[arg(long)]
    sigma: Option<f64>,

    /// Mhamdi camouflage scale, in [0, 1].
    #[arg(long)]
    zeta: Option<f64>,

    /// Iteration at which the targeted attack fires.
    #[arg(long)]
    k0: Option<usize>,

    /// Targeted attack victim node id.
    #[arg(long)]
    target: Option<usize>,

    /// Targeted shift is x_hat_scale * ones(d).
    #[arg(long)]
    x_hat_scale: Option<f64>,

    /// Repetitions per axis combination, each with a derived seed.
    #[arg(long)]
    repetitions: Option<usize>,

    /// Also write each run's topology as an edge-list text file.
    #[arg(long, default_value_t = false)]
    export_topology: bool,
}

impl Args {
    fn overrides(&self) -> Overrides {
        Overrides {
            nodes: self.nodes,
            connection_ratio: self.connection_ratio,
            byzantine_ratio: self.byzantine_ratio,
            rule: self.rule.clone(),
            attack: self.attack.clone(),
            alpha: self.alpha,
            rho: self.rho,
            rho_central: self.rho_central,
            lr0: self.lr0,
            fading: self.fading,
            batch_size: self.batch_size,
            iterations: self.iterations,
            eval_every: self.eval_every,
            model: self.model.clone(),
            dataset: self.dataset.clone(),
            mnist_limit: self.mnist_limit,
            mnist_dir: self.mnist_dir.clone(),
            sigma: self.sigma,
            zeta: self.zeta,
            k0: self.k0,
            target: self.target,
            x_hat_scale: self.x_hat_scale,
            repetitions: self.repetitions,
            seed: self.seed,
            out: self.out.clone(),
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: &Args) -> anyhow::Result<ExitCode> {
    let file = match &args.config {
        Some(path) => Some(parse_config_file(path)?),
        None => None,
    };
    let plan = ExperimentPlan::build(file, &args.overrides())?;
    let runs = plan.runs();
    println!(
        "plan: {} run(s) -> {}",
        runs.len(),
        plan.out_dir.display()
    );

    let threads = std::env::var("BYZSIM_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0);
    let report = execute(&plan, threads, args.export_topology)?;

    println!("completed: {}/{}", report.completed, runs.len());
    if report.failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for failure in &report.failures {
            eprintln!("failed: {} — {}", failure.run_id, failure.error);
        }
        Ok(ExitCode::FAILURE)
    }
}
