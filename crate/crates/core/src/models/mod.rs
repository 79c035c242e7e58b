//! Beta-regression and point-loss models, the Adam trainer and evaluation glue.

pub mod adam;
pub mod embedding;
pub mod linear;
mod text;
pub mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use embedding::{EmbeddingBetaModel, EmbeddingConfig, Pooling, TokenTable};
pub use linear::{sigmoid, LinearBetaModel, LinearPointModel, PointLoss};
pub use text::{evaluate, Evaluation, PropensityModel, Score};
pub use train::{fit, train_model, Diverged, EpochRecord, ModelSpec, TrainConfig, TrainError, TrainReport};

/// A model whose parameters live in one flat vector with an analytic per-example gradient.
pub trait Differentiable {
    type Input;

    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    /// Per-example loss; adds `scale ×` its gradient into `grad`.
    fn loss_and_grad(&self, input: &Self::Input, label: f64, scale: f64, grad: &mut [f64]) -> f64;

    fn loss(&self, input: &Self::Input, label: f64) -> f64;
}

/// Mean loss over `batch` and its gradient, written into `grad` (overwritten).
pub fn batch_loss_and_grad<M: Differentiable>(model: &M, batch: &[&(M::Input, f64)], grad: &mut [f64]) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    if batch.is_empty() {
        return 0.0;
    }
    let scale = 1.0 / batch.len() as f64;
    let total: f64 = batch.iter().map(|(input, y)| model.loss_and_grad(input, *y, scale, grad)).sum();
    total * scale
}

/// Mean loss over a dataset.
pub fn mean_loss<M: Differentiable>(model: &M, data: &[(M::Input, f64)]) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    data.iter().map(|(x, y)| model.loss(x, *y)).sum::<f64>() / data.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "linear-beta")]
    LinearBeta,
    #[serde(rename = "linear-point-mae")]
    LinearPointMae,
    #[serde(rename = "linear-point-mse")]
    LinearPointMse,
    #[serde(rename = "nblr")]
    Nblr,
    #[serde(rename = "embedding-beta")]
    EmbeddingBeta,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::LinearBeta,
        ModelKind::LinearPointMae,
        ModelKind::LinearPointMse,
        ModelKind::Nblr,
        ModelKind::EmbeddingBeta,
    ];

    /// Name stored in model artifacts.
    pub fn artifact_name(self) -> &'static str {
        match self {
            ModelKind::LinearBeta => "linear-beta",
            ModelKind::LinearPointMae => "linear-point-mae",
            ModelKind::LinearPointMse => "linear-point-mse",
            ModelKind::Nblr => "nblr",
            ModelKind::EmbeddingBeta => "embedding-beta",
        }
    }

    /// Short name used on the command line.
    pub fn cli_name(self) -> &'static str {
        match self {
            ModelKind::LinearBeta => "bow-beta",
            ModelKind::LinearPointMae => "bow-mae",
            ModelKind::LinearPointMse => "bow-mse",
            ModelKind::Nblr => "nblr",
            ModelKind::EmbeddingBeta => "emb-beta",
        }
    }

    pub fn is_beta(self) -> bool {
        matches!(self, ModelKind::LinearBeta | ModelKind::EmbeddingBeta)
    }

    /// Default Adam learning rate: the small fine-tuning rate for the embedding model, 1e-2 otherwise.
    pub fn default_learning_rate(self) -> f64 {
        match self {
            ModelKind::EmbeddingBeta => 1e-5,
            _ => 1e-2,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.artifact_name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.artifact_name() == s || k.cli_name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown model kind '{s}'")))
    }
}
