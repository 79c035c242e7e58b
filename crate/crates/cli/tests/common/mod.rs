#![allow(dead_code)]

use std::path::Path;

use propensity::artifact::{ModelArtifact, TrainingMetadata};
use propensity::data::{split_by_date, LabeledExample, RawArticle, SplitRatios};
use propensity::models::{train_model, ModelKind, ModelSpec, PropensityModel, TrainConfig};
use propensity::synthetic::{generate, SyntheticConfig};

pub fn examples(n: usize, seed: u64) -> Vec<LabeledExample> {
    let cfg = SyntheticConfig {
        n_docs: n,
        vocab_size: 120,
        n_drivers: 6,
        min_background: 8,
        max_background: 16,
        seed,
        ..Default::default()
    };
    generate(&cfg).unwrap().examples
}

/// Raw articles whose comment scores average to each example's label.
pub fn raw_lines(examples: &[LabeledExample]) -> String {
    examples
        .iter()
        .map(|e| {
            let a = RawArticle {
                id: e.id.clone(),
                title: String::new(),
                body: e.text.clone(),
                published_at: e.published_at,
                comment_scores: vec![e.label; 12],
            };
            serde_json::to_string(&a).unwrap() + "\n"
        })
        .collect()
}

pub fn trained(kind: ModelKind, seed: u64) -> ModelArtifact {
    let split = split_by_date(&examples(300, seed), SplitRatios::default()).unwrap();
    let mut spec = ModelSpec::new(kind);
    spec.embedding.dim = 8;
    let mut cfg = TrainConfig::for_kind(kind);
    cfg.max_epochs = 5;
    cfg.adam.learning_rate = 1e-2;
    let (model, report) = train_model(&spec, &split, &cfg).unwrap();
    let meta = TrainingMetadata {
        seed,
        data_fingerprint: None,
        epochs_run: report.epochs.len(),
        best_epoch: report.best_epoch,
        min_df: spec.min_df,
        train_config: Some(cfg),
    };
    ModelArtifact::new(model, meta)
}

pub fn zero_beta(dir: &Path) -> std::path::PathBuf {
    let docs = [propensity::featurize::tokenize("calm words"), propensity::featurize::tokenize("calm words")];
    let vocab = propensity::featurize::build_vocab(&docs, 1).unwrap();
    let model = PropensityModel::LinearBeta { model: propensity::models::LinearBetaModel::zeros(vocab.len()), vocab };
    let meta = TrainingMetadata {
        seed: 0,
        data_fingerprint: None,
        epochs_run: 0,
        best_epoch: 0,
        min_df: 1,
        train_config: None,
    };
    let path = dir.join("zero.model");
    ModelArtifact::new(model, meta).save(&path).unwrap();
    path
}
