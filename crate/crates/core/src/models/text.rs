use serde::Serialize;

use super::{EmbeddingBetaModel, LinearBetaModel, LinearPointModel, ModelKind, PointLoss};
use crate::beta::{BetaParams, Estimator};
use crate::data::LabeledExample;
use crate::error::{Error, Result};
use crate::featurize::{apply_nblr, tfidf, tokenize, FeatureVector, NblrWeights, TokenSequence, Vocabulary};
use crate::metrics::MetricsReport;

/// A trained model together with everything needed to go from raw text to a score.
#[derive(Debug, Clone, PartialEq)]
pub enum PropensityModel {
    LinearBeta {
        vocab: Vocabulary,
        model: LinearBetaModel,
    },
    /// Point-loss baseline; with `nblr` set, features are rescaled by the NBLR weights first.
    LinearPoint {
        vocab: Vocabulary,
        nblr: Option<NblrWeights>,
        model: LinearPointModel,
    },
    EmbeddingBeta(EmbeddingBetaModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Score {
    pub value: f64,
    /// The mode was requested but undefined, so the mean was returned.
    pub fallback: bool,
    /// Predicted distribution (Beta models only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<BetaParams<f64>>,
}

impl PropensityModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            PropensityModel::LinearBeta { .. } => ModelKind::LinearBeta,
            PropensityModel::LinearPoint { nblr: Some(_), .. } => ModelKind::Nblr,
            PropensityModel::LinearPoint { model, .. } => match model.loss_kind() {
                PointLoss::Mae => ModelKind::LinearPointMae,
                PointLoss::Mse => ModelKind::LinearPointMse,
            },
            PropensityModel::EmbeddingBeta(_) => ModelKind::EmbeddingBeta,
        }
    }

    pub fn vocabulary(&self) -> Option<&Vocabulary> {
        match self {
            PropensityModel::LinearBeta { vocab, .. } | PropensityModel::LinearPoint { vocab, .. } => Some(vocab),
            PropensityModel::EmbeddingBeta(_) => None,
        }
    }

    /// Model input features for the linear models (after NBLR scaling where applicable).
    pub fn features(&self, tokens: &TokenSequence) -> Result<FeatureVector> {
        match self {
            PropensityModel::LinearBeta { vocab, .. } => Ok(tfidf(tokens, vocab)),
            PropensityModel::LinearPoint { vocab, nblr, .. } => {
                let x = tfidf(tokens, vocab);
                match nblr {
                    Some(w) => apply_nblr(&x, w),
                    None => Ok(x),
                }
            }
            PropensityModel::EmbeddingBeta(_) => {
                Err(Error::Config("the embedding model has no bag-of-words features".into()))
            }
        }
    }

    /// Predicted Beta distribution; `None` for point models.
    pub fn predict_params(&self, tokens: &TokenSequence) -> Result<Option<BetaParams<f64>>> {
        match self {
            PropensityModel::LinearBeta { model, .. } => model.predict_params(&self.features(tokens)?).map(Some),
            PropensityModel::EmbeddingBeta(model) => model.predict_params(tokens).map(Some),
            PropensityModel::LinearPoint { .. } => Ok(None),
        }
    }

    pub fn score_tokens(&self, tokens: &TokenSequence, estimator: Estimator) -> Result<Score> {
        if let PropensityModel::LinearPoint { model, .. } = self {
            let value = model.predict(&self.features(tokens)?)?;
            return Ok(Score { value, fallback: false, params: None });
        }
        let params = self.predict_params(tokens)?.expect("Beta model");
        let est = params.estimate(estimator);
        Ok(Score { value: est.value, fallback: est.fallback, params: Some(params) })
    }

    pub fn score(&self, text: &str, estimator: Estimator) -> Result<Score> {
        self.score_tokens(&tokenize(text), estimator)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub metrics: MetricsReport<f64>,
    /// Examples where the mode was undefined and the mean was used instead.
    pub mode_fallbacks: usize,
    pub predictions: Vec<f64>,
}

/// Scores every example and compares the scores with the labels.
pub fn evaluate(model: &PropensityModel, examples: &[LabeledExample], estimator: Estimator) -> Result<Evaluation> {
    let mut predictions = Vec::with_capacity(examples.len());
    let mut mode_fallbacks = 0;
    for ex in examples {
        let s = model.score(&ex.text, estimator)?;
        mode_fallbacks += usize::from(s.fallback);
        predictions.push(s.value);
    }
    let labels: Vec<f64> = examples.iter().map(|e| e.label).collect();
    Ok(Evaluation { metrics: MetricsReport::compute(&predictions, &labels)?, mode_fallbacks, predictions })
}
