//! Independent oracles and shared fixtures for the integration tests.
#![allow(dead_code)]

use propensity::beta::Estimator;
use propensity::data::{split_by_date, AnnotationLevel, CorpusSplit, SplitRatios};
use propensity::metrics::ConfusionMatrix;
use propensity::models::{
    batch_loss_and_grad, evaluate, train_model, Differentiable, ModelKind, ModelSpec, PropensityModel, TrainConfig,
};
use propensity::models::{EmbeddingBetaModel, EmbeddingConfig, Pooling, TokenTable};
use propensity::synthetic::{generate, SyntheticConfig, SyntheticCorpus};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// O(n²) tau-b by explicit pair classification.
pub fn kendall_brute(x: &[f64], y: &[f64]) -> (f64, bool) {
    let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let sx = (x[i] - x[j]).signum() * f64::from(x[i] != x[j]);
            let sy = (y[i] - y[j]).signum() * f64::from(y[i] != y[j]);
            match (sx == 0.0, sy == 0.0) {
                (false, false) if sx == sy => c += 1,
                (false, false) => d += 1,
                (true, false) => tx += 1,
                (false, true) => ty += 1,
                (true, true) => {}
            }
        }
    }
    let (a, b) = (c + d + tx, c + d + ty);
    if a == 0 || b == 0 {
        return (0.0, true);
    }
    let v = (c - d) as f64 / ((a as f64) * (b as f64)).sqrt();
    (v.clamp(-1.0, 1.0), false)
}

/// Rank by counting smaller and equal values, then textbook Pearson.
pub fn spearman_brute(x: &[f64], y: &[f64]) -> (f64, bool) {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&a| {
                let less = v.iter().filter(|&&b| b < a).count();
                let equal = v.iter().filter(|&&b| b == a).count();
                less as f64 + (equal as f64 + 1.0) / 2.0
            })
            .collect()
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return (0.0, true);
    }
    ((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0), false)
}

/// Least-squares slope of `y` on a single dense column; 0 for a constant column.
pub fn ols_slope(col: &[f64], y: &[f64]) -> f64 {
    let n = col.len() as f64;
    let mx = col.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = col.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = col.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx <= 1e-300 {
        0.0
    } else {
        sxy / sxx
    }
}

pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Largest relative error between the analytic batch gradient and central differences over all parameters.
pub fn batch_gradient_error<M: Differentiable>(model: &mut M, data: &[(M::Input, f64)], h: f64, floor: f64) -> f64 {
    let batch: Vec<&(M::Input, f64)> = data.iter().collect();
    let mut grad = vec![0.0; model.params().len()];
    batch_loss_and_grad(model, &batch, &mut grad);
    let mut scratch = vec![0.0; grad.len()];
    let mut worst = 0.0_f64;
    for i in 0..grad.len() {
        let x0 = model.params()[i];
        model.params_mut()[i] = x0 + h;
        let up = batch_loss_and_grad(model, &batch, &mut scratch);
        model.params_mut()[i] = x0 - h;
        let down = batch_loss_and_grad(model, &batch, &mut scratch);
        model.params_mut()[i] = x0;
        worst = worst.max(rel_err(grad[i], (up - down) / (2.0 * h), floor));
    }
    worst
}

/// Two-group annotation confusion matrix over VU, U, N, L, VL.
pub fn annotation_table() -> ConfusionMatrix<AnnotationLevel> {
    use AnnotationLevel::*;
    ConfusionMatrix::from_counts(
        vec![VeryUnlikely, Unlikely, Neutral, Likely, VeryLikely],
        vec![
            vec![89, 28, 0, 23, 1],
            vec![30, 26, 0, 37, 3],
            vec![0, 1, 0, 3, 1],
            vec![31, 25, 0, 34, 56],
            vec![18, 21, 0, 87, 124],
        ],
    )
    .unwrap()
}

pub fn synthetic(seed: u64) -> (SyntheticCorpus, CorpusSplit) {
    let corpus = generate(&SyntheticConfig { seed, ..Default::default() }).unwrap();
    let split = split_by_date(&corpus.examples, SplitRatios::default()).unwrap();
    (corpus, split)
}

/// Shared training budget for the synthetic comparisons.
pub fn protocol(kind: ModelKind, seed: u64) -> (ModelSpec, TrainConfig) {
    let mut spec = ModelSpec::new(kind);
    spec.min_df = 5;
    let mut cfg = TrainConfig::for_kind(kind);
    cfg.seed = seed;
    cfg.patience = 5;
    cfg.max_epochs = 100;
    if kind == ModelKind::EmbeddingBeta {
        cfg.adam.learning_rate = 1e-2;
    }
    (spec, cfg)
}

pub fn train_and_score(kind: ModelKind, split: &CorpusSplit, seed: u64) -> (PropensityModel, f64) {
    let (spec, cfg) = protocol(kind, seed);
    let (model, _) = train_model(&spec, split, &cfg).unwrap();
    let kendall = evaluate(&model, &split.test, Estimator::Mean).unwrap().metrics.kendall;
    (model, kendall)
}

pub const SMALL_TERMS: [&str; 6] = ["<unk>", "a", "b", "c", "d", "e"];

/// Small random embedding model over [`SMALL_TERMS`] with a non-zero attention vector.
pub fn random_embedding(rng: &mut ChaCha8Rng, pooling: Pooling, dim: usize) -> EmbeddingBetaModel {
    let terms = SMALL_TERMS.iter().map(|s| s.to_string()).collect();
    let cfg = EmbeddingConfig { dim, pooling, init_scale: 0.7, ..Default::default() };
    let mut m = EmbeddingBetaModel::init(TokenTable::from_terms(terms).unwrap(), cfg, rng.random()).unwrap();
    let offset = SMALL_TERMS.len() * dim;
    for k in 0..dim {
        m.params_mut()[offset + k] = rng.random_range(-1.0..1.0);
    }
    m
}
