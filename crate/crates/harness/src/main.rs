use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use savgo_harness::{
    emit_plots, load_config, parse_list, run_ablation, run_experiment, run_sweep, Axis, AxisValue, HarnessError,
    RunSummary, Variant, OUTPUT_ROOT_ENV,
};

/// Runs, sweeps, ablations and plots for the value-geometry actor-critic.
///
/// Outputs go under the directory named by SAVGO_OUTPUT_ROOT (default `runs`).
#[derive(Parser)]
#[command(name = "savgo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Seeds {
    /// Comma-separated seeds; defaults to the config's seed.
    #[arg(long, value_name = "a,b,c")]
    seed_list: Option<String>,
    /// Maximum concurrent runs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Train one config over one or more seeds.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        seeds: Seeds,
    },
    /// Train one config per value of a swept axis (lambda, K, variant, seed).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        axis: String,
        #[arg(long, value_name = "v1,v2,...")]
        values: String,
        #[command(flatten)]
        seeds: Seeds,
    },
    /// Train one design-choice variant of a config.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        variant: String,
        #[command(flatten)]
        seeds: Seeds,
    },
    /// Draw SVG curves from metrics CSVs.
    Plot {
        /// Glob pattern, e.g. `runs/*/seed-*/metrics.csv`.
        #[arg(long)]
        inputs: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "config".into())
}

fn seeds(s: &Seeds, default: u64) -> Result<Vec<u64>, HarnessError> {
    match &s.seed_list {
        Some(list) => parse_list(list),
        None => Ok(vec![default]),
    }
}

fn report(dir: &Path, s: &RunSummary) {
    println!(
        "{}: max return {:.2} ± {:.2} over seeds {:?} ({:.1}s)",
        dir.display(),
        s.mean_max,
        s.std_max,
        s.seeds,
        s.wall_seconds
    );
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config, seeds: sd } => {
            let cfg = load_config(&config)?;
            let dir = output_root().join(stem(&config));
            let summary = run_experiment(&cfg, &seeds(&sd, cfg.seed)?, sd.jobs, &dir)?;
            report(&dir, &summary);
        }
        Command::Sweep { config, axis, values, seeds: sd } => {
            let cfg = load_config(&config)?;
            let axis: Axis = axis.parse()?;
            let values = AxisValue::parse_list(axis, &values)?;
            let dir = output_root().join(format!("{}-sweep", stem(&config)));
            for p in run_sweep(&cfg, &values, &seeds(&sd, cfg.seed)?, sd.jobs, &dir)? {
                report(&dir.join(&p.label), &p.summary);
            }
        }
        Command::Ablate { config, variant, seeds: sd } => {
            let cfg = load_config(&config)?;
            let variant: Variant = variant.parse()?;
            let dir = output_root().join(format!("{}-{variant}", stem(&config)));
            let summary = run_ablation(variant, &cfg, &seeds(&sd, cfg.seed)?, sd.jobs, &dir)?;
            report(&dir, &summary);
        }
        Command::Plot { inputs, out } => {
            let pattern = glob::glob(&inputs).map_err(|e| HarnessError::Usage(format!("bad glob `{inputs}`: {e}")))?;
            let mut paths = Vec::new();
            for p in pattern {
                paths.push(p.map_err(|e| HarnessError::Usage(e.to_string()))?);
            }
            for p in emit_plots(&paths, &out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let msg = e.to_string();
            eprintln!("error: {}", msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: "));
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
