use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use savgo_core::numerics::checkpoint;
use savgo_core::trainer::{train_with, ExperimentConfig};
use serde::{Deserialize, Serialize};

use crate::config::{config_hash, echo};
use crate::metrics_io::MetricsWriter;
use crate::{plot, HarnessError, Variant};

/// Aggregate of one configuration over its seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Hash of the effective config echo (seed as given in the document).
    pub config_hash: String,
    pub seeds: Vec<u64>,
    /// Best evaluation return seen during each seed's run.
    pub per_seed_max: Vec<f64>,
    pub mean_max: f64,
    /// Population standard deviation of the per-seed maxima.
    pub std_max: f64,
    pub wall_seconds: f64,
}

impl RunSummary {
    fn new(cfg: &ExperimentConfig, seeds: Vec<u64>, per_seed_max: Vec<f64>, wall_seconds: f64) -> Self {
        let n = per_seed_max.len() as f64;
        let mean = per_seed_max.iter().sum::<f64>() / n;
        let var = per_seed_max.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n;
        Self { config_hash: config_hash(cfg), seeds, per_seed_max, mean_max: mean, std_max: var.sqrt(), wall_seconds }
    }
}

fn create_dir(path: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(path).map_err(|e| HarnessError::io(path, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut s = serde_json::to_string_pretty(value).expect("summary serializes");
    s.push('\n');
    write_file(path, s)
}

/// One training run into `dir`: effective config, incremental metrics CSV,
/// final actor checkpoint. Returns the best evaluation return.
fn single_run(cfg: &ExperimentConfig, dir: &Path) -> Result<f64, HarnessError> {
    create_dir(dir)?;
    write_file(&dir.join("config.json"), echo(cfg))?;
    let mut writer = MetricsWriter::create(&dir.join("metrics.csv"))?;
    let mut best = f64::NEG_INFINITY;
    let run = train_with(cfg, |row| {
        best = best.max(row.mean_eval_return);
        writer.write(row).map_err(|e| e.to_string())
    })?;
    write_file(&dir.join("actor.ckpt"), checkpoint::encode(&run.trainer.policy().net))?;
    if run.metrics.is_empty() {
        return Err(HarnessError::Usage(format!(
            "{}: run produced no evaluation rows (total_steps {} < eval_interval {})",
            dir.display(),
            cfg.total_steps,
            cfg.eval_interval
        )));
    }
    Ok(best)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, HarnessError> {
    if jobs == 0 {
        return Err(HarnessError::Usage("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| HarnessError::Usage(e.to_string()))
}

/// Runs every `(config, directory)` pair with at most `jobs` in flight.
/// Results come back in input order regardless of scheduling.
fn execute(runs: &[(ExperimentConfig, PathBuf)], jobs: usize) -> Result<Vec<f64>, HarnessError> {
    pool(jobs)?.install(|| runs.par_iter().map(|(cfg, dir)| single_run(cfg, dir)).collect())
}

fn seed_dir(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed-{seed}"))
}

fn check_seeds(seeds: &[u64]) -> Result<(), HarnessError> {
    if seeds.is_empty() {
        return Err(HarnessError::Usage("at least one seed is required".into()));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(HarnessError::Usage(format!("duplicate seeds in {seeds:?}")));
    }
    Ok(())
}

fn metrics_paths(dirs: impl IntoIterator<Item = PathBuf>) -> Vec<PathBuf> {
    dirs.into_iter().map(|d| d.join("metrics.csv")).collect()
}

/// One run per seed under `dir/seed-<s>/`, plus `dir/config.json`,
/// `dir/summary.json` and SVG curves in `dir/curves/`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    seeds: &[u64],
    jobs: usize,
    dir: &Path,
) -> Result<RunSummary, HarnessError> {
    cfg.validate().map_err(HarnessError::Schema)?;
    check_seeds(seeds)?;
    let started = Instant::now();
    create_dir(dir)?;
    write_file(&dir.join("config.json"), echo(cfg))?;
    let runs: Vec<_> =
        seeds.iter().map(|&s| (ExperimentConfig { seed: s, ..cfg.clone() }, seed_dir(dir, s))).collect();
    let maxima = execute(&runs, jobs)?;
    let summary = RunSummary::new(cfg, seeds.to_vec(), maxima, started.elapsed().as_secs_f64());
    write_json(&dir.join("summary.json"), &summary)?;
    plot::emit_plots(&metrics_paths(runs.into_iter().map(|(_, d)| d)), &dir.join("curves"))?;
    Ok(summary)
}

/// Runs one design-choice variant of `base`.
pub fn run_ablation(
    variant: Variant,
    base: &ExperimentConfig,
    seeds: &[u64],
    jobs: usize,
    dir: &Path,
) -> Result<RunSummary, HarnessError> {
    run_experiment(&variant.apply(base), seeds, jobs, dir)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Lambda,
    K,
    Variant,
    Seed,
}

impl std::str::FromStr for Axis {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lambda" => Ok(Axis::Lambda),
            "K" | "k" => Ok(Axis::K),
            "variant" => Ok(Axis::Variant),
            "seed" => Ok(Axis::Seed),
            other => Err(HarnessError::Usage(format!("unknown axis `{other}`; valid: lambda, K, variant, seed"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AxisValue {
    Lambda(f64),
    K(usize),
    Variant(Variant),
    Seed(u64),
}

impl AxisValue {
    pub fn parse_list(axis: Axis, s: &str) -> Result<Vec<AxisValue>, HarnessError> {
        use crate::config::parse_list;
        Ok(match axis {
            Axis::Lambda => parse_list::<f64>(s)?.into_iter().map(AxisValue::Lambda).collect(),
            Axis::K => parse_list::<usize>(s)?.into_iter().map(AxisValue::K).collect(),
            Axis::Variant => parse_list::<String>(s)?
                .iter()
                .map(|v| v.parse().map(AxisValue::Variant))
                .collect::<Result<_, _>>()?,
            Axis::Seed => parse_list::<u64>(s)?.into_iter().map(AxisValue::Seed).collect(),
        })
    }

    pub fn label(&self) -> String {
        match self {
            AxisValue::Lambda(l) => format!("lambda-{l}"),
            AxisValue::K(k) => format!("K-{k}"),
            AxisValue::Variant(v) => format!("variant-{v}"),
            AxisValue::Seed(s) => format!("seed-{s}"),
        }
    }

    pub fn apply(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut c = base.clone();
        match *self {
            AxisValue::Lambda(l) => c.geometry.lambda = l,
            AxisValue::K(k) => c.kernel.k = k,
            AxisValue::Variant(v) => c = v.apply(base),
            AxisValue::Seed(s) => c.seed = s,
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub label: String,
    pub summary: RunSummary,
}

/// One experiment per axis value under `dir/<axis>-<value>/`, all runs sharing
/// one `jobs`-wide pool, plus `dir/sweep.json` listing every point. On the
/// seed axis each point runs exactly its own seed and `seeds` is ignored.
pub fn run_sweep(
    base: &ExperimentConfig,
    values: &[AxisValue],
    seeds: &[u64],
    jobs: usize,
    dir: &Path,
) -> Result<Vec<SweepPoint>, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::Usage("sweep needs at least one axis value".into()));
    }
    check_seeds(seeds)?;
    let started = Instant::now();
    create_dir(dir)?;
    let mut points = Vec::new();
    for v in values {
        let cfg = v.apply(base);
        cfg.validate().map_err(|e| HarnessError::Schema(format!("{}: {e}", v.label())))?;
        let point_seeds = match v {
            AxisValue::Seed(s) => vec![*s],
            _ => seeds.to_vec(),
        };
        let pdir = dir.join(v.label());
        if points.iter().any(|(_, d, _): &(_, PathBuf, _)| *d == pdir) {
            return Err(HarnessError::Usage(format!("duplicate axis value {}", v.label())));
        }
        points.push((cfg, pdir, point_seeds));
    }
    let mut runs = Vec::new();
    for (cfg, pdir, point_seeds) in &points {
        create_dir(pdir)?;
        write_file(&pdir.join("config.json"), echo(cfg))?;
        for &s in point_seeds {
            runs.push((ExperimentConfig { seed: s, ..cfg.clone() }, seed_dir(pdir, s)));
        }
    }
    let maxima = execute(&runs, jobs)?;
    let wall = started.elapsed().as_secs_f64();
    let mut out = Vec::new();
    let mut offset = 0;
    for ((cfg, pdir, point_seeds), v) in points.iter().zip(values) {
        let n = point_seeds.len();
        let summary = RunSummary::new(cfg, point_seeds.clone(), maxima[offset..offset + n].to_vec(), wall);
        offset += n;
        write_json(&pdir.join("summary.json"), &summary)?;
        plot::emit_plots(&metrics_paths(point_seeds.iter().map(|&s| seed_dir(pdir, s))), &pdir.join("curves"))?;
        out.push(SweepPoint { label: v.label(), summary });
    }
    write_json(&dir.join("sweep.json"), &out)?;
    Ok(out)
}
