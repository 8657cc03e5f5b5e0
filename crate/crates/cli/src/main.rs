//! `vqe-lab`: runs one experiment from a preset or JSON config, writing CSV
//! and metadata into the output directory.
//!
//! Exit codes: 0 success, 2 configuration error, 3 a bound check failed,
//! 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::{error, info};
use vqe_lab::bounds::format_reports;
use vqe_lab::config::{ExperimentConfig, ExperimentKind};
use vqe_lab::experiment;
use vqe_lab::Error;

#[derive(Parser, Debug)]
#[command(name = "vqe-lab", version, about = "VQE under shot noise, gate noise and error mitigation")]
struct Args {
    /// JSON config; fields left out keep the preset of the chosen experiment.
    #[arg(long)]
    config: Option<PathBuf>,
    /// convergence, noise_sweep, circuit_sweep, test_shots, bounds or custom.
    #[arg(long)]
    experiment: Option<ExperimentKind>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config. Defaults to out/<experiment>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Print the resolved config as JSON and exit.
    #[arg(long)]
    print_config: bool,
}

fn resolve(args: &Args) -> vqe_lab::Result<ExperimentConfig> {
    let fallback = args.experiment.unwrap_or(ExperimentKind::Convergence);
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path, fallback)?,
        None => ExperimentConfig::preset(fallback),
    };
    if let (Some(kind), Some(_)) = (args.experiment, &args.config) {
        cfg.experiment = kind;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_) | Error::Json(_) | Error::IndivisibleBudget { .. } | Error::Asymmetric(..) | Error::BadShape(_)
    )
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("cannot size thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let cfg = match resolve(&args) {
        Ok(c) => c,
        Err(e) => {
            error!("{e}");
            return ExitCode::from(if is_config_error(&e) { 2 } else { 1 });
        }
    };
    if args.print_config {
        println!("{}", cfg.to_json());
        return ExitCode::SUCCESS;
    }
    let out = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out").join(cfg.experiment.name()));
    info!("running {} into {}", cfg.experiment, out.display());
    match experiment::run(&cfg, &out) {
        Ok(result) => {
            for f in &result.files {
                info!("wrote {}", f.display());
            }
            if !result.reports.is_empty() {
                print!("{}", format_reports(&result.reports));
                if !result.all_passed() {
                    error!("{} bound check(s) failed", result.reports.iter().filter(|r| !r.passed).count());
                    return ExitCode::from(3);
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            error!("{e}");
            ExitCode::from(if is_config_error(&e) { 2 } else { 1 })
        }
    }
}
