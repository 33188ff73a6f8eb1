//! linmix CLI: single reconstructions, preset experiments, and theoretical
//! limit evaluation.
//!
//! Exit codes: 0 success, 2 configuration error, 3 divergence-only failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use linmix_core::error::Error;
use linmix_core::estimators::support_threshold;
use linmix_core::limits::{mmae_limit, mmsue_limit, mmue_limit, LimitQuery, Resolution};
use linmix_core::model::{ErrorMetric, SignalPrior};

use linmix_harness::config::{parse_config, preset, ExperimentConfig};
use linmix_harness::run::{run_experiment, run_trial, sweep_points};
use linmix_harness::svg;

#[derive(Parser)]
#[command(
    name = "linmix",
    about = "Bayesian signal reconstruction for noisy linear mixing systems",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single reconstruction described by a JSON config and print the
    /// per-estimator errors.
    Estimate {
        /// Path to the JSON experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Also write the per-iteration engine trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a preset or custom experiment sweep and write CSV results.
    Experiment(ExperimentArgs),
    /// Evaluate a theoretical limit for the sparse Gaussian prior.
    Limits(LimitsArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// fig3 | fig4 | fig5a | fig5b | fig6, or 'custom' with --config.
    #[arg(long, default_value = "custom")]
    preset: String,
    /// JSON config (required for --preset custom; ignored otherwise).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the signal length.
    #[arg(long)]
    n: Option<usize>,
    /// Override the trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Use the published experiment sizes instead of desk-scale defaults.
    #[arg(long)]
    full_scale: bool,
    /// Also write one SVG line plot per reported metric.
    #[arg(long)]
    svg: bool,
    /// Output directory for records.csv, aggregate.csv, summary.txt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LimitsArgs {
    /// squared | abs | support | pow:<p>
    #[arg(long)]
    metric: String,
    /// Sparsity rate of the sparse Gaussian prior.
    #[arg(long)]
    s: f64,
    /// Nonzero-component variance.
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Scalar-channel noise variance.
    #[arg(long)]
    mu: f64,
    /// Component count N.
    #[arg(long)]
    n: usize,
    /// Use Monte Carlo with this many samples instead of quadrature.
    #[arg(long)]
    mc_samples: Option<usize>,
    /// Monte Carlo seed.
    #[arg(long, default_value_t = 0)]
    mc_seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate { config, trace } => cmd_estimate(&config, trace.as_deref()),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Limits(args) => cmd_limits(args),
    };
    match result {
        Ok(code) => code,
        Err(Error::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Error::Diverged { iteration, .. }) => {
            eprintln!("error: message passing diverged at iteration {iteration}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn load_config(args: &ExperimentArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = if args.preset == "custom" {
        let path = args
            .config
            .as_ref()
            .ok_or_else(|| Error::Config("--preset custom requires --config".into()))?;
        parse_config(&std::fs::read_to_string(path)?)?
    } else {
        preset(&args.preset, args.full_scale)?
    };
    if let Some(n) = args.n {
        cfg.n = n;
        cfg.n_sweep = None;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(s) = args.seed {
        cfg.master_seed = s;
    }
    Ok(cfg)
}

fn cmd_experiment(args: ExperimentArgs) -> Result<ExitCode, Error> {
    let cfg = load_config(&args)?;
    let outcome = run_experiment(&cfg, Some(&args.out))?;
    println!(
        "{}: {} trials ({} diverged) in {:.1}s -> {}",
        cfg.preset,
        outcome.total_trials,
        outcome.diverged_trials,
        outcome.wall_time.as_secs_f64(),
        args.out.display()
    );
    if args.svg {
        for metric in &cfg.metrics_reported {
            let (x_label, series) = svg::series_for_metric(&outcome.aggregates, metric);
            if series.is_empty() {
                continue;
            }
            let title = format!("{} - {}", cfg.preset, metric);
            let file = args.out.join(format!("{}.svg", metric.replace(':', "_")));
            std::fs::write(&file, svg::render(&title, &x_label, metric, &series))?;
            println!("wrote {}", file.display());
        }
    }
    if outcome.diverged_trials == outcome.total_trials {
        eprintln!("every trial diverged");
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_estimate(config: &PathBuf, trace: Option<&std::path::Path>) -> Result<ExitCode, Error> {
    let cfg = parse_config(&std::fs::read_to_string(config)?)?;
    let points = sweep_points(&cfg);
    let out = run_trial(&cfg, points[0], 0)?;
    if let Some(path) = trace {
        std::fs::write(path, linmix_harness::run::trace_csv(&out.trace))?;
    }
    if out.diverged {
        eprintln!("reconstruction diverged");
        return Ok(ExitCode::from(3));
    }
    println!(
        "n={} m={} ratio={} seed={} mu={:.6e} iterations={}",
        points[0].n,
        points[0].m,
        points[0].ratio,
        out.records[0].seed,
        out.mu.unwrap_or(f64::NAN),
        out.iterations
    );
    println!("{:<28} {:<10} {:>14}", "estimator", "metric", "error");
    for rec in &out.records {
        println!(
            "{:<28} {:<10} {:>14.6e}",
            rec.estimator,
            rec.metric,
            rec.error_value.unwrap_or(f64::NAN)
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_limits(args: LimitsArgs) -> Result<ExitCode, Error> {
    let prior = SignalPrior::sparse_gaussian(args.s, args.sigma2)?;
    if args.metric == "support" {
        let value = mmsue_limit(args.s, args.sigma2, args.mu, args.n)?;
        let tau = support_threshold(args.s, args.sigma2, args.mu)?;
        println!("mmsue = {value}");
        println!("tau = {tau}");
        return Ok(ExitCode::SUCCESS);
    }
    let metric = match args.metric.as_str() {
        "squared" => ErrorMetric::Squared,
        "abs" => ErrorMetric::Absolute,
        other => {
            if let Some(p) = other.strip_prefix("pow:") {
                let p: f64 = p
                    .parse()
                    .map_err(|_| Error::Config(format!("bad exponent in '{other}'")))?;
                ErrorMetric::pow(p)?
            } else {
                return Err(Error::Config(format!("unknown metric '{other}'")));
            }
        }
    };
    let mut query = LimitQuery::new(prior, args.mu, metric.clone(), args.n)?;
    if let Some(samples) = args.mc_samples {
        query = query.with_resolution(Resolution::MonteCarlo {
            samples,
            seed: args.mc_seed,
        })?;
    }
    let result = if args.metric == "abs" {
        mmae_limit(&query)?
    } else {
        mmue_limit(&query)?
    };
    let label = if args.metric == "abs" { "mmae" } else { "mmue" };
    println!("{label} = {}", result.value);
    if let Some(se) = result.std_error {
        println!("std_error = {se}");
    }
    if let Some(w) = result.precision_warning {
        eprintln!("warning: {w}");
    }
    Ok(ExitCode::SUCCESS)
}
