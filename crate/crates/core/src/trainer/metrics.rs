use serde::{Deserialize, Serialize};

/// Column order of the metrics file.
pub const METRICS_HEADER: [&str; 10] = [
    "step",
    "mean_eval_return",
    "std_eval_return",
    "critic_loss",
    "actor_loss",
    "representation_loss",
    "eta",
    "beta",
    "rho",
    "wall_seconds",
];

/// One evaluation point. Loss columns are empty before the first update, and
/// the geometry columns are empty for runs without an encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub mean_eval_return: f64,
    pub std_eval_return: f64,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub representation_loss: Option<f64>,
    pub eta: f64,
    pub beta: Option<f64>,
    pub rho: Option<f64>,
    pub wall_seconds: f64,
}
