//! Mini-batch Adam with seeded shuffling, early stopping on validation loss and
//! restoration of the best epoch.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::{
    batch_loss_and_grad, mean_loss, Differentiable, EmbeddingBetaModel, EmbeddingConfig, LinearBetaModel,
    LinearPointModel, ModelKind, PointLoss, PropensityModel, TokenTable,
};
use crate::data::{CorpusSplit, LabeledExample};
use crate::error::{Error, Result};
use crate::featurize::{apply_nblr, build_vocab, fit_nblr, tfidf, tokenize, TokenSequence, DEFAULT_MIN_DF};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub adam: AdamConfig<f64>,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn for_kind(kind: ModelKind) -> Self {
        Self {
            batch_size: 16,
            adam: AdamConfig::with_learning_rate(kind.default_learning_rate()),
            max_epochs: 50,
            patience: 3,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("need at least one epoch".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        self.adam.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_train_loss: f64,
    pub initial_validation_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept; 0 means no epoch improved on the initial weights.
    pub best_epoch: usize,
    pub best_validation_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diverged {
    pub epoch: usize,
    pub step: u64,
    pub loss: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Invalid(#[from] Error),
    #[error("training diverged at epoch {} (step {}): loss {}", .0.epoch, .0.step, .0.loss)]
    Diverged(Diverged),
}

/// Trains `model` in place. The returned parameters are those with the lowest
/// validation loss (training loss when `validation` is empty).
pub fn fit<M: Differentiable>(
    model: &mut M,
    train: &[(M::Input, f64)],
    validation: &[(M::Input, f64)],
    config: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::degenerate("training set is empty").into());
    }
    let selection_loss = |m: &M| {
        if validation.is_empty() {
            mean_loss(m, train)
        } else {
            mean_loss(m, validation)
        }
    };
    let initial_train_loss = mean_loss(model, train);
    let initial_validation_loss = selection_loss(model);
    if !initial_train_loss.is_finite() || !initial_validation_loss.is_finite() {
        return Err(TrainError::Diverged(Diverged { epoch: 0, step: 0, loss: initial_train_loss }));
    }

    let n = model.params().len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = AdamState::new(n);
    let mut grad = vec![0.0; n];
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best_params = model.params().to_vec();
    let mut best_loss = initial_validation_loss;
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut epochs = Vec::new();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&(M::Input, f64)> = chunk.iter().map(|&i| &train[i]).collect();
            let loss = batch_loss_and_grad(model, &batch, &mut grad);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::Diverged(Diverged { epoch, step: state.step_count() + 1, loss }));
            }
            adam_step(model.params_mut(), &grad, &mut state, &config.adam)?;
        }
        let train_loss = mean_loss(model, train);
        let validation_loss = selection_loss(model);
        if !train_loss.is_finite() || !validation_loss.is_finite() {
            return Err(TrainError::Diverged(Diverged { epoch, step: state.step_count(), loss: train_loss }));
        }
        epochs.push(EpochRecord { epoch, train_loss, validation_loss });
        if validation_loss < best_loss {
            best_loss = validation_loss;
            best_epoch = epoch;
            best_params.copy_from_slice(model.params());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    model.params_mut().copy_from_slice(&best_params);
    Ok(TrainReport { initial_train_loss, initial_validation_loss, epochs, best_epoch, best_validation_loss: best_loss })
}

/// What to build: model family plus featurization settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub min_df: usize,
    pub embedding: EmbeddingConfig,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        Self { kind, min_df: DEFAULT_MIN_DF, embedding: EmbeddingConfig::default() }
    }
}

fn tokens_and_labels(examples: &[LabeledExample]) -> (Vec<TokenSequence>, Vec<f64>) {
    examples.iter().map(|e| (tokenize(&e.text), e.label)).unzip()
}

/// Builds features from the training split, then fits the requested model.
pub fn train_model(
    spec: &ModelSpec,
    split: &CorpusSplit,
    config: &TrainConfig,
) -> Result<(PropensityModel, TrainReport), TrainError> {
    let (train_tokens, train_labels) = tokens_and_labels(&split.train);
    let (val_tokens, val_labels) = tokens_and_labels(&split.validation);
    if train_tokens.is_empty() {
        return Err(Error::degenerate("training split is empty").into());
    }

    if spec.kind == ModelKind::EmbeddingBeta {
        let table = TokenTable::build(&train_tokens, spec.embedding.min_count);
        let mut model = EmbeddingBetaModel::init(table, spec.embedding, config.seed)?;
        let pair = |toks: &[TokenSequence], labels: &[f64], m: &EmbeddingBetaModel| -> Vec<(Vec<usize>, f64)> {
            toks.iter().zip(labels).map(|(t, &y)| (m.encode(t), y)).collect()
        };
        let train = pair(&train_tokens, &train_labels, &model);
        let val = pair(&val_tokens, &val_labels, &model);
        let report = fit(&mut model, &train, &val, config)?;
        return Ok((PropensityModel::EmbeddingBeta(model), report));
    }

    let vocab = build_vocab(&train_tokens, spec.min_df)?;
    if vocab.is_empty() {
        return Err(Error::degenerate(format!("no term reaches min_df = {}", spec.min_df)).into());
    }
    let mut train_x: Vec<_> = train_tokens.iter().map(|t| tfidf(t, &vocab)).collect();
    let mut val_x: Vec<_> = val_tokens.iter().map(|t| tfidf(t, &vocab)).collect();
    let zip = |xs: Vec<_>, ys: &[f64]| xs.into_iter().zip(ys.iter().copied()).collect::<Vec<_>>();

    match spec.kind {
        ModelKind::LinearBeta => {
            let mut model = LinearBetaModel::zeros(vocab.len());
            let report = fit(&mut model, &zip(train_x, &train_labels), &zip(val_x, &val_labels), config)?;
            Ok((PropensityModel::LinearBeta { vocab, model }, report))
        }
        ModelKind::LinearPointMae | ModelKind::LinearPointMse | ModelKind::Nblr => {
            let nblr = if spec.kind == ModelKind::Nblr {
                let w = fit_nblr(&train_x, &train_labels)?;
                train_x = train_x.iter().map(|x| apply_nblr(x, &w)).collect::<Result<_>>()?;
                val_x = val_x.iter().map(|x| apply_nblr(x, &w)).collect::<Result<_>>()?;
                Some(w)
            } else {
                None
            };
            let loss = if spec.kind == ModelKind::LinearPointMae { PointLoss::Mae } else { PointLoss::Mse };
            let mut model = LinearPointModel::zeros(vocab.len(), loss);
            let report = fit(&mut model, &zip(train_x, &train_labels), &zip(val_x, &val_labels), config)?;
            Ok((PropensityModel::LinearPoint { vocab, nblr, model }, report))
        }
        ModelKind::EmbeddingBeta => unreachable!("handled above"),
    }
}
