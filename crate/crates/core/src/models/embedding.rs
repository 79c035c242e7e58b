//! Trainable token-embedding encoder with pooled Beta heads.
//!
//! Tokens are truncated (head + tail), mapped to rows of an embedding table,
//! pooled into one vector `h`, and two affine heads give `ln α = u_α·h + c_α`
//! and `ln β = u_β·h + c_β`.
//!
//! [`Pooling::Attention`] weights positions by `softmax(v·e_l)`; with `v = 0` it
//! is exactly mean pooling. Under plain mean pooling every position receives the
//! same gradient `∂f/∂h / L`, which makes gradient-norm attributions constant
//! across tokens, so attention pooling is the default.

use std::collections::{HashMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Differentiable;
use crate::beta::{BetaParams, LOG_PARAM_CLAMP};
use crate::error::{Error, Result};
use crate::featurize::{TokenSequence, Truncation};

pub const UNKNOWN_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Mean,
    #[default]
    Attention,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub pooling: Pooling,
    pub truncation: Truncation,
    /// Minimum document frequency for a word to get its own row.
    pub min_count: usize,
    /// Standard deviation of the initial embedding and head weights.
    pub init_scale: f64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self { dim: 64, pooling: Pooling::Attention, truncation: Truncation::default(), min_count: 2, init_scale: 0.1 }
    }
}

/// Word → embedding row. Row 0 is the unknown-token row.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenTable {
    terms: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl TokenTable {
    pub fn from_terms(terms: Vec<String>) -> Result<Self> {
        if terms.first().map(String::as_str) != Some(UNKNOWN_TOKEN) {
            return Err(Error::Artifact(format!("token table must start with {UNKNOWN_TOKEN}")));
        }
        let lookup: HashMap<String, usize> = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if lookup.len() != terms.len() {
            return Err(Error::Artifact("duplicate term in token table".into()));
        }
        Ok(Self { terms, lookup })
    }

    /// Words with document frequency ≥ `min_count`, by descending frequency then text.
    pub fn build(corpus: &[TokenSequence], min_count: usize) -> Self {
        let mut df: HashMap<&str, usize> = HashMap::new();
        for doc in corpus {
            let unique: HashSet<&str> = doc.tokens().iter().map(|t| t.text.as_str()).collect();
            for w in unique {
                *df.entry(w).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> =
            df.into_iter().filter(|&(w, d)| d >= min_count.max(1) && w != UNKNOWN_TOKEN).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut terms = vec![UNKNOWN_TOKEN.to_string()];
        terms.extend(kept.into_iter().map(|(w, _)| w.to_string()));
        Self::from_terms(terms).expect("unique terms")
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn row(&self, word: &str) -> usize {
        self.lookup.get(word).copied().unwrap_or(0)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub pooled: Vec<f64>,
    /// Pooling weight of each position (sums to 1 when nonempty).
    pub weights: Vec<f64>,
    pub logit_alpha: f64,
    pub logit_beta: f64,
}

impl Forward {
    pub fn params(&self) -> Result<BetaParams<f64>> {
        BetaParams::from_log(self.logit_alpha, self.logit_beta)
    }

    /// Whether each head output lies inside the ±30 clamp (gradient flows).
    pub fn heads_active(&self) -> (bool, bool) {
        (self.logit_alpha.abs() <= LOG_PARAM_CLAMP, self.logit_beta.abs() <= LOG_PARAM_CLAMP)
    }
}

/// Parameter layout: `[E (rows × dim), v (dim), u_α (dim), c_α, u_β (dim), c_β]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBetaModel {
    table: TokenTable,
    config: EmbeddingConfig,
    params: Vec<f64>,
}

impl EmbeddingBetaModel {
    pub fn param_count(rows: usize, dim: usize) -> usize {
        rows * dim + 3 * dim + 2
    }

    fn check_config(config: &EmbeddingConfig) -> Result<()> {
        if config.dim == 0 {
            return Err(Error::Config("embedding dimension must be at least 1".into()));
        }
        let t = config.truncation;
        Truncation::new(t.max_len(), t.head(), t.tail()).map(|_| ())
    }

    pub fn init(table: TokenTable, config: EmbeddingConfig, seed: u64) -> Result<Self> {
        Self::check_config(&config)?;
        let normal = Normal::new(0.0, config.init_scale).map_err(|e| Error::Config(format!("bad init scale: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = Self { params: vec![0.0; Self::param_count(table.len(), config.dim)], table, config };
        let emb_len = model.table.len() * config.dim;
        for p in &mut model.params[..emb_len] {
            *p = normal.sample(&mut rng);
        }
        let (ua, ub) = (model.alpha_offset(), model.beta_offset());
        for k in 0..config.dim {
            model.params[ua + k] = normal.sample(&mut rng);
            model.params[ub + k] = normal.sample(&mut rng);
        }
        Ok(model)
    }

    pub fn from_params(table: TokenTable, config: EmbeddingConfig, params: Vec<f64>) -> Result<Self> {
        let want = Self::param_count(table.len(), config.dim);
        if params.len() != want {
            return Err(Error::shape(want, params.len()));
        }
        Self::check_config(&config)?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain("non-finite model weight".into()));
        }
        Ok(Self { table, config, params })
    }

    pub fn table(&self) -> &TokenTable {
        &self.table
    }

    pub fn config(&self) -> &EmbeddingConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    fn attention_offset(&self) -> usize {
        self.table.len() * self.config.dim
    }

    fn alpha_offset(&self) -> usize {
        self.attention_offset() + self.config.dim
    }

    fn beta_offset(&self) -> usize {
        self.alpha_offset() + self.config.dim + 1
    }

    pub fn embedding(&self, row: usize) -> &[f64] {
        let d = self.config.dim;
        &self.params[row * d..(row + 1) * d]
    }

    pub fn attention_vector(&self) -> &[f64] {
        let o = self.attention_offset();
        &self.params[o..o + self.config.dim]
    }

    /// `(u_α, c_α)`.
    pub fn alpha_head(&self) -> (&[f64], f64) {
        let o = self.alpha_offset();
        (&self.params[o..o + self.config.dim], self.params[o + self.config.dim])
    }

    /// `(u_β, c_β)`.
    pub fn beta_head(&self) -> (&[f64], f64) {
        let o = self.beta_offset();
        (&self.params[o..o + self.config.dim], self.params[o + self.config.dim])
    }

    /// Truncates and maps tokens to embedding rows.
    pub fn encode(&self, tokens: &TokenSequence) -> Vec<usize> {
        self.config.truncation.apply(tokens).tokens().iter().map(|t| self.table.row(&t.text)).collect()
    }

    pub fn embed(&self, rows: &[usize]) -> Vec<&[f64]> {
        rows.iter().map(|&r| self.embedding(r)).collect()
    }

    pub fn forward(&self, rows: &[usize]) -> Forward {
        self.forward_embedded(&self.embed(rows))
    }

    /// Forward pass from already looked-up position vectors.
    pub fn forward_embedded(&self, vectors: &[&[f64]]) -> Forward {
        let d = self.config.dim;
        let weights: Vec<f64> = match self.config.pooling {
            _ if vectors.is_empty() => Vec::new(),
            Pooling::Mean => vec![1.0 / vectors.len() as f64; vectors.len()],
            Pooling::Attention => {
                let v = self.attention_vector();
                let scores: Vec<f64> = vectors.iter().map(|e| dot(e, v)).collect();
                let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                let z: f64 = exps.iter().sum();
                exps.into_iter().map(|e| e / z).collect()
            }
        };
        let mut pooled = vec![0.0; d];
        for (e, &a) in vectors.iter().zip(&weights) {
            for (h, x) in pooled.iter_mut().zip(e.iter()) {
                *h += a * x;
            }
        }
        let (ua, ca) = self.alpha_head();
        let (ub, cb) = self.beta_head();
        Forward { logit_alpha: dot(ua, &pooled) + ca, logit_beta: dot(ub, &pooled) + cb, pooled, weights }
    }

    pub fn predict_params_rows(&self, rows: &[usize]) -> Result<BetaParams<f64>> {
        self.forward(rows).params()
    }

    pub fn predict_params(&self, tokens: &TokenSequence) -> Result<BetaParams<f64>> {
        self.predict_params_rows(&self.encode(tokens))
    }

    /// Gradient of a scalar objective with respect to each position's embedding,
    /// given the objective's gradient `d_pooled` with respect to the pooled vector.
    pub fn position_gradients(&self, vectors: &[&[f64]], fwd: &Forward, d_pooled: &[f64]) -> Vec<Vec<f64>> {
        let v = self.attention_vector();
        vectors
            .iter()
            .zip(&fwd.weights)
            .map(|(e, &a)| match self.config.pooling {
                Pooling::Mean => d_pooled.iter().map(|g| a * g).collect(),
                Pooling::Attention => {
                    let proj: f64 =
                        d_pooled.iter().zip(e.iter().zip(&fwd.pooled)).map(|(g, (ek, hk))| g * (ek - hk)).sum();
                    d_pooled.iter().zip(v).map(|(g, vk)| a * (g + proj * vk)).collect()
                }
            })
            .collect()
    }

    /// Gradient of the objective with respect to the attention vector `v`.
    fn attention_gradient(vectors: &[&[f64]], fwd: &Forward, d_pooled: &[f64], scale: f64, out: &mut [f64]) {
        for (e, &a) in vectors.iter().zip(&fwd.weights) {
            let centered: Vec<f64> = e.iter().zip(&fwd.pooled).map(|(ek, hk)| ek - hk).collect();
            let proj = dot(d_pooled, &centered);
            for (o, c) in out.iter_mut().zip(&centered) {
                *o += scale * a * proj * c;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Differentiable for EmbeddingBetaModel {
    type Input = Vec<usize>;

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn loss_and_grad(&self, rows: &Vec<usize>, y: f64, scale: f64, grad: &mut [f64]) -> f64 {
        let vectors = self.embed(rows);
        let fwd = self.forward_embedded(&vectors);
        let p = match fwd.params() {
            Ok(p) => p,
            Err(_) => return f64::NAN,
        };
        let (mut ga, mut gb) = p.grad_nll_log(y);
        let (active_a, active_b) = fwd.heads_active();
        if !active_a {
            ga = 0.0;
        }
        if !active_b {
            gb = 0.0;
        }
        let d = self.config.dim;
        let (ao, bo) = (self.alpha_offset(), self.beta_offset());
        for k in 0..d {
            grad[ao + k] += scale * ga * fwd.pooled[k];
            grad[bo + k] += scale * gb * fwd.pooled[k];
        }
        grad[ao + d] += scale * ga;
        grad[bo + d] += scale * gb;

        if !rows.is_empty() {
            let (ua, _) = self.alpha_head();
            let (ub, _) = self.beta_head();
            let d_pooled: Vec<f64> = ua.iter().zip(ub).map(|(a, b)| ga * a + gb * b).collect();
            let per_position = self.position_gradients(&vectors, &fwd, &d_pooled);
            for (&r, g) in rows.iter().zip(per_position) {
                for (slot, gk) in grad[r * d..(r + 1) * d].iter_mut().zip(g) {
                    *slot += scale * gk;
                }
            }
            if self.config.pooling == Pooling::Attention {
                let o = self.attention_offset();
                Self::attention_gradient(&vectors, &fwd, &d_pooled, scale, &mut grad[o..o + d]);
            }
        }
        -p.log_pdf(y)
    }

    fn loss(&self, rows: &Vec<usize>, y: f64) -> f64 {
        match self.predict_params_rows(rows) {
            Ok(p) => -p.log_pdf(y),
            Err(_) => f64::NAN,
        }
    }
}
