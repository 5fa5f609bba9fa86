use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use eafpca::kv::KeyValues;
use eafpca_cli::pipeline::{self, Stage};
use eafpca_cli::PipelineConfig;

#[derive(Parser)]
#[command(
    name = "eafpca",
    version,
    about = "Eigen-adjusted FPCA with covariate-dependent eigenvalues"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Key-value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Random seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (overrides `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Run the pipeline up to this command R times with seeds seed..seed+R-1.
    #[arg(long, global = true)]
    runs: Option<usize>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Override a configuration entry, e.g. `--set sim.n=400`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate a simulated dataset and its truth sidecar.
    Simulate,
    /// Estimate mean, pooled covariance, eigenbasis and noise variance.
    Fit,
    /// Estimate covariate-specific eigenvalue fields.
    Eigenmap,
    /// k-means on an eigenvalue field.
    Cluster,
    /// Compare fitted artifacts with the simulation truth.
    Evaluate,
}

impl Command {
    fn stage(self) -> Stage {
        match self {
            Command::Simulate => Stage::Simulate,
            Command::Fit => Stage::Fit,
            Command::Eigenmap => Stage::Eigenmap,
            Command::Cluster => Stage::Cluster,
            Command::Evaluate => Stage::Evaluate,
        }
    }
}

fn overrides(cli: &Cli) -> Result<KeyValues> {
    let mut kv = KeyValues::new();
    for item in &cli.set {
        let Some((k, v)) = item.split_once('=') else {
            bail!("cli: `--set {item}` is not KEY=VALUE");
        };
        kv.set(k.trim(), v.trim());
    }
    if let Some(s) = cli.seed {
        kv.set("seed", s);
    }
    if let Some(o) = &cli.out {
        kv.set("out", o.display());
    }
    Ok(kv)
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cli: configuring the thread pool")?;
    }
    let cfg = PipelineConfig::load(cli.config.as_deref(), &overrides(cli)?)?;
    let stage = cli.command.stage();
    if let Some(runs) = cli.runs {
        if runs == 0 {
            bail!("cli: --runs must be at least 1");
        }
        if let Some(summary) = pipeline::run_batch(stage, &cfg, runs)? {
            println!("{:<32} {:>14} {:>14} {:>5}", "metric", "mean", "sd", "runs");
            for (k, (mean, sd, n)) in &summary {
                println!("{k:<32} {mean:>14.6} {sd:>14.6} {n:>5}");
            }
        } else {
            println!("{runs} runs written under {}", cfg.out.display());
        }
        return Ok(());
    }
    let dir = cfg.out.as_path();
    match cli.command {
        Command::Simulate => {
            let s = pipeline::cmd_simulate(&cfg, dir)?;
            println!(
                "simulated {:?}: n = {}, total observations = {}, seed = {}",
                s.model, s.n, s.total_obs, s.seed
            );
        }
        Command::Fit => {
            let f = pipeline::cmd_fit(&cfg, dir)?;
            println!(
                "L = {}, FVE = {:.4}, sigma2 = {:.6}",
                f.l,
                f.basis.fve[f.l - 1],
                f.sigma2
            );
            println!("{:>4} {:>14} {:>8}", "k", "lambda*", "FVE");
            for k in 0..f.basis.len().min(f.l.max(5)) {
                println!("{:>4} {:>14.6} {:>8.4}", k + 1, f.basis.lambda_star[k], f.basis.fve[k]);
            }
        }
        Command::Eigenmap => {
            for f in pipeline::cmd_eigenmap(&cfg, dir)? {
                let clamped = f.clamped.iter().filter(|&&c| c).count();
                println!(
                    "{}: {} points, L = {}, {} clamped values, {} failed points",
                    f.method,
                    f.len(),
                    f.l(),
                    clamped,
                    f.failures.len()
                );
            }
        }
        Command::Cluster => {
            for (k, c) in pipeline::cmd_cluster(&cfg, dir)? {
                println!("k = {k}: inertia = {:.6}, best restart {}", c.inertia, c.best_restart);
            }
        }
        Command::Evaluate => {
            for (k, v) in pipeline::cmd_evaluate(&cfg, dir)? {
                println!("{k:<32} {v:>14.6}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
