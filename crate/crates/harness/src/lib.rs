//! Experiment front end for `savgo-core`: config documents, multi-seed runs,
//! sweeps, ablation variants, CSV metrics, summaries and SVG curves.

pub mod config;
pub mod metrics_io;
pub mod plot;
pub mod runner;

use std::path::Path;

use savgo_core::trainer::{ExperimentConfig, TrainError};
use thiserror::Error;

pub use config::{config_hash, echo, load_config, parse_config, parse_list};
pub use metrics_io::{parse_metrics, read_metrics, write_metrics, MetricsWriter};
pub use plot::emit_plots;
pub use runner::{run_ablation, run_experiment, run_sweep, Axis, AxisValue, RunSummary, SweepPoint};

/// Environment variable naming the root directory for run outputs.
pub const OUTPUT_ROOT_ENV: &str = "SAVGO_OUTPUT_ROOT";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Schema(String),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Csv { path: String, message: String },
    #[error("{path}: {source}")]
    Context { path: String, source: Box<HarnessError> },
    #[error("training failed: {0}")]
    Train(#[from] TrainError),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }

    pub fn csv(path: &Path, e: csv::Error) -> Self {
        Self::Csv { path: path.display().to_string(), message: e.to_string() }
    }

    pub fn context(self, path: &Path) -> Self {
        Self::Context { path: path.display().to_string(), source: Box::new(self) }
    }
}

/// Design-choice variants, each removing one component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Full,
    NoAdaptiveRho,
    NoRepresentationLoss,
    NoAdaptiveBeta,
    UniformKernel,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoAdaptiveRho,
        Variant::NoRepresentationLoss,
        Variant::NoAdaptiveBeta,
        Variant::UniformKernel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoAdaptiveRho => "no_adaptive_rho",
            Variant::NoRepresentationLoss => "no_representation_loss",
            Variant::NoAdaptiveBeta => "no_adaptive_beta",
            Variant::UniformKernel => "uniform_kernel",
        }
    }

    /// `base` with all ablation flags cleared, then this variant's flag set.
    /// Fixed ρ defaults to `rho_max` and fixed β to `beta_init`.
    pub fn apply(self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut c = ExperimentConfig {
            fixed_rho: None,
            freeze_encoder: false,
            fixed_beta: None,
            uniform_kernel: false,
            ..base.clone()
        };
        match self {
            Variant::Full => {}
            Variant::NoAdaptiveRho => c.fixed_rho = Some(base.fixed_rho.unwrap_or(base.kernel.rho_max)),
            Variant::NoRepresentationLoss => c.freeze_encoder = true,
            Variant::NoAdaptiveBeta => c.fixed_beta = Some(base.fixed_beta.unwrap_or(base.geometry.beta_init)),
            Variant::UniformKernel => c.uniform_kernel = true,
        }
        c
    }

    /// The variant whose flags `cfg` carries, if exactly one (or none) is set.
    pub fn detect(cfg: &ExperimentConfig) -> Option<Variant> {
        let flags = [
            (cfg.fixed_rho.is_some(), Variant::NoAdaptiveRho),
            (cfg.freeze_encoder, Variant::NoRepresentationLoss),
            (cfg.fixed_beta.is_some(), Variant::NoAdaptiveBeta),
            (cfg.uniform_kernel, Variant::UniformKernel),
        ];
        let on: Vec<Variant> = flags.iter().filter(|(f, _)| *f).map(|(_, v)| *v).collect();
        match on.as_slice() {
            [] => Some(Variant::Full),
            [v] => Some(*v),
            _ => None,
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
            HarnessError::Usage(format!("unknown variant `{s}`; valid: {}", names.join(", ")))
        })
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
