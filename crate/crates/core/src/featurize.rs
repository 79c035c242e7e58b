//! Tokenization, head+tail truncation, uni/bi-gram TF-IDF and NBLR feature scaling.

use std::collections::{HashMap, HashSet};

use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_MIN_DF: usize = 2;

/// A lower-cased word with its byte span in the source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
#[serde(transparent)]
pub struct TokenSequence {
    tokens: Vec<Token>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<Token>) -> Self {
        Self { tokens }
    }

    /// Builds a sequence from bare words with synthetic, space-separated offsets.
    pub fn from_words<S: AsRef<str>>(words: &[S]) -> Self {
        let mut pos = 0;
        let tokens = words
            .iter()
            .map(|w| {
                let w = w.as_ref();
                let t = Token { text: w.to_string(), start: pos, end: pos + w.len() };
                pos += w.len() + 1;
                t
            })
            .collect();
        Self { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn texts(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    /// Copy of the sequence with the token at `position` removed.
    pub fn without(&self, position: usize) -> Self {
        let mut tokens = self.tokens.clone();
        tokens.remove(position);
        Self { tokens }
    }
}

/// Splits on Unicode whitespace, trims non-alphanumeric characters from each
/// piece's ends and lower-cases what remains.
pub fn tokenize(text: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    let mut push = |start: usize, end: usize| {
        let piece = &text[start..end];
        let trimmed_start = piece.trim_start_matches(|c: char| !c.is_alphanumeric());
        let lead = piece.len() - trimmed_start.len();
        let trimmed = trimmed_start.trim_end_matches(|c: char| !c.is_alphanumeric());
        if !trimmed.is_empty() {
            tokens.push(Token { text: trimmed.to_lowercase(), start: start + lead, end: start + lead + trimmed.len() });
        }
    };
    let mut seg_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), seg_start) {
            (true, Some(s)) => {
                push(s, i);
                seg_start = None;
            }
            (false, None) => seg_start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = seg_start {
        push(s, text.len());
    }
    TokenSequence { tokens }
}

/// Keeps the first `head` and last `tail` tokens of sequences longer than `max_len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct Truncation {
    max_len: usize,
    head: usize,
    tail: usize,
}

impl Default for Truncation {
    fn default() -> Self {
        Self { max_len: 510, head: 128, tail: 382 }
    }
}

impl Truncation {
    pub fn new(max_len: usize, head: usize, tail: usize) -> Result<Self> {
        if head + tail != max_len {
            return Err(Error::Config(format!("head ({head}) + tail ({tail}) must equal max_len ({max_len})")));
        }
        Ok(Self { max_len, head, tail })
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn head(&self) -> usize {
        self.head
    }

    pub fn tail(&self) -> usize {
        self.tail
    }

    /// Original positions that survive truncation of an `n`-token sequence, in order.
    pub fn kept_positions(&self, n: usize) -> Vec<usize> {
        if n <= self.max_len {
            return (0..n).collect();
        }
        (0..self.head).chain(n - self.tail..n).collect()
    }

    pub fn apply(&self, tokens: &TokenSequence) -> TokenSequence {
        let n = tokens.len();
        if n <= self.max_len {
            return tokens.clone();
        }
        let mut kept = Vec::with_capacity(self.max_len);
        kept.extend_from_slice(&tokens.tokens[..self.head]);
        kept.extend_from_slice(&tokens.tokens[n - self.tail..]);
        TokenSequence { tokens: kept }
    }
}

pub fn truncate(tokens: &TokenSequence, max_len: usize, head: usize, tail: usize) -> Result<TokenSequence> {
    Ok(Truncation::new(max_len, head, tail)?.apply(tokens))
}

/// An n-gram occurrence: term text and the token positions it covers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramSpan {
    pub term: String,
    pub start: usize,
    pub len: usize,
}

/// All unigrams followed by all bigrams (adjacent tokens joined by one space).
pub fn ngram_spans<S: AsRef<str>>(words: &[S]) -> Vec<NgramSpan> {
    let mut out = Vec::with_capacity(words.len() * 2);
    for (i, w) in words.iter().enumerate() {
        out.push(NgramSpan { term: w.as_ref().to_string(), start: i, len: 1 });
    }
    for (i, pair) in words.windows(2).enumerate() {
        out.push(NgramSpan { term: format!("{} {}", pair[0].as_ref(), pair[1].as_ref()), start: i, len: 2 });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermEntry {
    pub term: String,
    pub df: usize,
    pub idf: f64,
}

/// Uni/bi-gram vocabulary with smoothed IDF `ln((1 + N) / (1 + df)) + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    entries: Vec<TermEntry>,
    lookup: HashMap<String, usize>,
    n_docs: usize,
}

pub fn smoothed_idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

impl Vocabulary {
    /// Rebuilds a vocabulary from `(term, index, df)` triples; indices must be dense.
    pub fn from_triples(n_docs: usize, triples: Vec<(String, usize, usize)>) -> Result<Self> {
        let m = triples.len();
        let mut slots: Vec<Option<TermEntry>> = vec![None; m];
        for (term, index, df) in triples {
            if index >= m || slots[index].is_some() {
                return Err(Error::Artifact(format!("vocabulary index {index} invalid or repeated")));
            }
            if df == 0 || df > n_docs {
                return Err(Error::Artifact(format!("document frequency {df} outside 1..={n_docs}")));
            }
            slots[index] = Some(TermEntry { idf: smoothed_idf(n_docs, df), term, df });
        }
        let entries: Vec<TermEntry> = slots.into_iter().map(|s| s.expect("dense")).collect();
        let lookup = entries.iter().enumerate().map(|(i, e)| (e.term.clone(), i)).collect();
        Ok(Self { entries, lookup, n_docs })
    }

    /// `(term, index, df)` triples sorted by term.
    pub fn triples(&self) -> Vec<(&str, usize, usize)> {
        let mut out: Vec<_> = self.entries.iter().enumerate().map(|(i, e)| (e.term.as_str(), i, e.df)).collect();
        out.sort_by(|a, b| a.0.cmp(b.0));
        out
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.lookup.get(term).copied()
    }

    pub fn entry(&self, index: usize) -> &TermEntry {
        &self.entries[index]
    }

    pub fn entries(&self) -> &[TermEntry] {
        &self.entries
    }
}

/// Collects n-grams with document frequency at least `min_df`.
///
/// Indices are assigned by descending document frequency, then term.
pub fn build_vocab(corpus: &[TokenSequence], min_df: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::degenerate("cannot build a vocabulary from an empty corpus"));
    }
    let mut df: HashMap<String, usize> = HashMap::new();
    for doc in corpus {
        let unique: HashSet<String> = ngram_spans(&doc.texts()).into_iter().map(|s| s.term).collect();
        for term in unique {
            *df.entry(term).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = df.into_iter().filter(|(_, d)| *d >= min_df.max(1)).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let n_docs = corpus.len();
    let entries: Vec<TermEntry> =
        kept.into_iter().map(|(term, d)| TermEntry { idf: smoothed_idf(n_docs, d), term, df: d }).collect();
    let lookup = entries.iter().enumerate().map(|(i, e)| (e.term.clone(), i)).collect();
    Ok(Vocabulary { entries, lookup, n_docs })
}

/// Sparse vector with strictly ascending indices below `dim`.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct FeatureVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl FeatureVector {
    /// Sorts and merges the given pairs; panics if an index is out of range.
    pub fn from_pairs(dim: usize, mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            assert!(i < dim, "feature index {i} out of range {dim}");
            match entries.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => entries.push((i, v)),
            }
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries.binary_search_by_key(&index, |e| e.0).map(|k| self.entries[k].1).unwrap_or(0.0)
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * dense[i]).sum()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt()
    }
}

/// Raw-count TF times IDF over in-vocabulary n-grams, L2-normalized.
pub fn tfidf(tokens: &TokenSequence, vocab: &Vocabulary) -> FeatureVector {
    let mut counts: HashMap<usize, f64> = HashMap::new();
    for span in ngram_spans(&tokens.texts()) {
        if let Some(i) = vocab.index_of(&span.term) {
            *counts.entry(i).or_insert(0.0) += 1.0;
        }
    }
    let pairs: Vec<(usize, f64)> = counts.into_iter().map(|(i, c)| (i, c * vocab.entry(i).idf)).collect();
    let mut fv = FeatureVector::from_pairs(vocab.len(), pairs);
    let norm = fv.norm();
    if norm > 0.0 {
        for e in &mut fv.entries {
            e.1 /= norm;
        }
    }
    fv
}

/// Per-feature OLS slopes of the label on each TF-IDF column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NblrWeights {
    pub weights: Vec<f64>,
    pub label_mean: f64,
}

/// `w_j = Σ (τ_nj - τ̄_j)(y_n - ȳ) / Σ (τ_nj - τ̄_j)²`; zero-variance columns get 0.
pub fn fit_nblr(features: &[FeatureVector], labels: &[f64]) -> Result<NblrWeights> {
    if features.len() != labels.len() {
        return Err(Error::shape(features.len(), labels.len()));
    }
    if features.len() < 2 {
        return Err(Error::degenerate("NBLR weights need at least two examples"));
    }
    let dim = features[0].dim;
    if let Some(f) = features.iter().find(|f| f.dim != dim) {
        return Err(Error::shape(dim, f.dim));
    }
    let n = features.len() as f64;
    let label_mean = labels.iter().sum::<f64>() / n;
    let residual_sum: f64 = labels.iter().map(|y| y - label_mean).sum();

    let mut sum = vec![0.0; dim];
    let mut nnz = vec![0usize; dim];
    let mut max_abs = vec![0.0f64; dim];
    for f in features {
        for &(j, v) in &f.entries {
            sum[j] += v;
            nnz[j] += 1;
            max_abs[j] = max_abs[j].max(v.abs());
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();

    // Centered sums split into stored entries and implicit zeros.
    let mut cross = vec![0.0; dim];
    let mut sq = vec![0.0; dim];
    for (f, &y) in features.iter().zip(labels) {
        let dy = y - label_mean;
        for &(j, v) in &f.entries {
            let d = v - mean[j];
            cross[j] += v * dy;
            sq[j] += d * d;
        }
    }
    let weights = (0..dim)
        .map(|j| {
            let zeros = features.len() - nnz[j];
            let var = sq[j] + zeros as f64 * mean[j] * mean[j];
            let cov = cross[j] - mean[j] * residual_sum;
            let scale = f64::EPSILON * max_abs[j];
            if nnz[j] == 0 || var <= scale * scale * n {
                0.0
            } else {
                cov / var
            }
        })
        .collect();
    Ok(NblrWeights { weights, label_mean })
}

/// Elementwise `w_j · x_j`, dropping entries whose weight is exactly zero.
pub fn apply_nblr(features: &FeatureVector, weights: &NblrWeights) -> Result<FeatureVector> {
    if weights.weights.len() != features.dim {
        return Err(Error::shape(features.dim, weights.weights.len()));
    }
    let entries = features
        .entries
        .iter()
        .filter(|&&(j, _)| weights.weights[j] != 0.0)
        .map(|&(j, v)| (j, v * weights.weights[j]))
        .collect();
    Ok(FeatureVector { dim: features.dim, entries })
}
