//! Article ingestion, propensity labels, date-ordered splits and the
//! human-annotation benchmark.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Placed between title and body when forming the model input text.
pub const TITLE_BODY_SEPARATOR: &str = "\n";

pub const DEFAULT_MIN_COMMENTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawArticle {
    pub id: String,
    pub title: String,
    pub body: String,
    pub published_at: DateTime<Utc>,
    pub comment_scores: Vec<f64>,
}

impl RawArticle {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Parse("article id must be nonempty".into()));
        }
        if let Some(s) = self.comment_scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::Parse(format!("article {}: comment score {s} outside [0, 1]", self.id)));
        }
        Ok(())
    }

    pub fn text(&self) -> String {
        compose_text(&self.title, &self.body)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub id: String,
    pub text: String,
    pub label: f64,
    pub published_at: DateTime<Utc>,
}

pub fn compose_text(title: &str, body: &str) -> String {
    let mut text = String::with_capacity(title.len() + body.len() + 1);
    text.push_str(title);
    text.push_str(TITLE_BODY_SEPARATOR);
    text.push_str(body);
    text
}

/// Propensity label of an article: the mean toxicity of its comments.
pub fn label_article(comment_scores: &[f64]) -> Result<f64> {
    if comment_scores.is_empty() {
        return Err(Error::degenerate("article has no comment scores"));
    }
    let mean = comment_scores.iter().sum::<f64>() / comment_scores.len() as f64;
    Ok(mean.clamp(0.0, 1.0))
}

fn to_example(article: &RawArticle, min_comments: usize) -> Option<LabeledExample> {
    if article.comment_scores.len() < min_comments.max(1) {
        return None;
    }
    let label = label_article(&article.comment_scores).ok()?;
    Some(LabeledExample { id: article.id.clone(), text: article.text(), label, published_at: article.published_at })
}

/// Drops articles with fewer than `min_comments` scores and labels the rest.
pub fn build_corpus(articles: &[RawArticle], min_comments: usize) -> Vec<LabeledExample> {
    articles.iter().filter_map(|a| to_example(a, min_comments)).collect()
}

/// Counts reported by [`ingest_stream`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct IngestSummary {
    pub read: usize,
    pub kept: usize,
    pub dropped_low_volume: usize,
}

/// Streams raw article records to labeled example records, one line at a time.
pub fn ingest_stream<R: BufRead, W: Write>(input: R, min_comments: usize, mut output: W) -> Result<IngestSummary> {
    let mut seen = HashSet::new();
    let mut summary = IngestSummary::default();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let article: RawArticle = parse_line(&line, lineno)?;
        article.validate()?;
        if !seen.insert(article.id.clone()) {
            return Err(Error::Parse(format!("duplicate article id '{}'", article.id)));
        }
        summary.read += 1;
        match to_example(&article, min_comments) {
            Some(ex) => {
                serde_json::to_writer(&mut output, &ex)?;
                output.write_all(b"\n")?;
                summary.kept += 1;
            }
            None => summary.dropped_low_volume += 1,
        }
    }
    output.flush()?;
    Ok(summary)
}

fn parse_line<T: DeserializeOwned>(line: &str, lineno: usize) -> Result<T> {
    serde_json::from_str(line).map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
}

/// Reads one JSON record per nonblank line.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(input: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_line(&line, lineno)?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(records: &[T], mut output: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut output, r)?;
        output.write_all(b"\n")?;
    }
    output.flush()?;
    Ok(())
}

/// Reads and validates raw articles, rejecting duplicate ids.
pub fn read_raw_articles<R: BufRead>(input: R) -> Result<Vec<RawArticle>> {
    let articles: Vec<RawArticle> = read_jsonl(input)?;
    let mut seen = HashSet::new();
    for a in &articles {
        a.validate()?;
        if !seen.insert(a.id.as_str()) {
            return Err(Error::Parse(format!("duplicate article id '{}'", a.id)));
        }
    }
    Ok(articles)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.8, validation: 0.1, test: 0.1 }
    }
}

impl SplitRatios {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self> {
        let all = [train, validation, test];
        if all.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(Error::Config(format!("split ratios must be positive, got {all:?}")));
        }
        if (train + validation + test - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios must sum to 1, got {all:?}")));
        }
        Ok(Self { train, validation, test })
    }
}

impl FromStr for SplitRatios {
    type Err = Error;

    /// Accepts `a:b:c` with any positive weights, normalized to sum to one.
    fn from_str(s: &str) -> Result<Self> {
        let parts = s
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse(format!("bad ratio '{s}': {e}")))?;
        if parts.len() != 3 {
            return Err(Error::Parse(format!("expected three ratios like 8:1:1, got '{s}'")));
        }
        let total: f64 = parts.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Config(format!("split ratios must be positive, got '{s}'")));
        }
        Self::new(parts[0] / total, parts[1] / total, parts[2] / total)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusSplit {
    pub train: Vec<LabeledExample>,
    pub validation: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
}

impl CorpusSplit {
    /// Names of splits that came out empty.
    pub fn empty_parts(&self) -> Vec<&'static str> {
        [("train", &self.train), ("validation", &self.validation), ("test", &self.test)]
            .into_iter()
            .filter(|(_, v)| v.is_empty())
            .map(|(n, _)| n)
            .collect()
    }
}

fn floor_share(ratio: f64, n: usize) -> usize {
    // guards against products like 0.3 * 10 = 3.0000000000000004
    (ratio * n as f64 + 1e-9).floor() as usize
}

/// Sorts by publishing date (ties by id) and cuts contiguous train / validation / test blocks.
pub fn split_by_date(examples: &[LabeledExample], ratios: SplitRatios) -> Result<CorpusSplit> {
    if examples.len() < 3 {
        return Err(Error::degenerate(format!("need at least 3 examples to split, got {}", examples.len())));
    }
    let mut sorted = examples.to_vec();
    sorted.sort_by(|a, b| a.published_at.cmp(&b.published_at).then_with(|| a.id.cmp(&b.id)));
    let n = sorted.len();
    let n_train = floor_share(ratios.train, n).min(n);
    let n_val = floor_share(ratios.validation, n).min(n - n_train);
    let test = sorted.split_off(n_train + n_val);
    let validation = sorted.split_off(n_train);
    Ok(CorpusSplit { train: sorted, validation, test })
}

/// Five-level human judgement of how likely an article is to attract toxic comments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnnotationLevel {
    #[serde(rename = "VU")]
    VeryUnlikely,
    #[serde(rename = "U")]
    Unlikely,
    #[serde(rename = "N")]
    Neutral,
    #[serde(rename = "L")]
    Likely,
    #[serde(rename = "VL")]
    VeryLikely,
}

impl AnnotationLevel {
    pub const ALL: [AnnotationLevel; 5] = [
        AnnotationLevel::VeryUnlikely,
        AnnotationLevel::Unlikely,
        AnnotationLevel::Neutral,
        AnnotationLevel::Likely,
        AnnotationLevel::VeryLikely,
    ];

    /// -2, -1, 0, 1, 2 for VU, U, N, L, VL.
    pub fn value(self) -> i32 {
        match self {
            AnnotationLevel::VeryUnlikely => -2,
            AnnotationLevel::Unlikely => -1,
            AnnotationLevel::Neutral => 0,
            AnnotationLevel::Likely => 1,
            AnnotationLevel::VeryLikely => 2,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            AnnotationLevel::VeryUnlikely => "VU",
            AnnotationLevel::Unlikely => "U",
            AnnotationLevel::Neutral => "N",
            AnnotationLevel::Likely => "L",
            AnnotationLevel::VeryLikely => "VL",
        }
    }
}

impl fmt::Display for AnnotationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for AnnotationLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AnnotationLevel::ALL
            .into_iter()
            .find(|l| l.code() == s)
            .ok_or_else(|| Error::Parse(format!("unknown annotation level '{s}'")))
    }
}

/// Sum of the two groups' level values, in `-4..=4`.
pub fn joint_annotation_score(a: AnnotationLevel, b: AnnotationLevel) -> i32 {
    a.value() + b.value()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub id: String,
    pub group1: AnnotationLevel,
    pub group2: AnnotationLevel,
}

impl AnnotationRecord {
    pub fn joint_score(&self) -> i32 {
        joint_annotation_score(self.group1, self.group2)
    }
}

/// Label interval of a benchmark bucket; only the last one is closed on the right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BucketInterval {
    pub lower: f64,
    pub upper: f64,
    pub upper_inclusive: bool,
}

impl BucketInterval {
    pub fn contains(&self, y: f64) -> bool {
        y >= self.lower && (y < self.upper || (self.upper_inclusive && y <= self.upper))
    }
}

pub const BUCKET_INTERVALS: [BucketInterval; 7] = {
    const fn open(lower: f64, upper: f64) -> BucketInterval {
        BucketInterval { lower, upper, upper_inclusive: false }
    }
    [
        open(0.0, 0.1),
        open(0.1, 0.2),
        open(0.2, 0.3),
        open(0.3, 0.4),
        open(0.4, 0.5),
        open(0.5, 0.6),
        BucketInterval { lower: 0.6, upper: 1.0, upper_inclusive: true },
    ]
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bucket {
    pub interval: BucketInterval,
    /// Sampled examples kept for judging.
    pub examples: Vec<LabeledExample>,
    /// Sampled ids set aside for annotator training.
    pub holdout: Vec<String>,
    /// Set when fewer than the requested number of examples were available.
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JudgedExample {
    pub example: LabeledExample,
    pub annotation: AnnotationRecord,
    pub joint_score: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkSet {
    pub buckets: Vec<Bucket>,
    pub training_holdout: Vec<String>,
    pub judged: Vec<JudgedExample>,
}

impl BenchmarkSet {
    pub fn benchmark_examples(&self) -> impl Iterator<Item = &LabeledExample> {
        self.buckets.iter().flat_map(|b| b.examples.iter())
    }

    /// Joins annotation records to the judged (non-holdout) examples; returns how many matched.
    pub fn attach_annotations(&mut self, records: &[AnnotationRecord]) -> usize {
        let examples: Vec<LabeledExample> = self.benchmark_examples().cloned().collect();
        self.judged = join_annotations(&examples, records);
        self.judged.len()
    }
}

/// Pairs annotation records with examples by id, in record order; unmatched records are skipped.
pub fn join_annotations(examples: &[LabeledExample], records: &[AnnotationRecord]) -> Vec<JudgedExample> {
    let by_id: HashMap<&str, &LabeledExample> = examples.iter().map(|e| (e.id.as_str(), e)).collect();
    records
        .iter()
        .filter_map(|r| {
            by_id.get(r.id.as_str()).map(|ex| JudgedExample {
                example: (*ex).clone(),
                annotation: r.clone(),
                joint_score: r.joint_score(),
            })
        })
        .collect()
}

fn holdout_count(fraction: f64, sampled: usize) -> usize {
    ((fraction * sampled as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Samples up to `per_bucket` examples from each label bucket and sets a fraction aside.
pub fn bucket_sample(
    examples: &[LabeledExample],
    per_bucket: usize,
    holdout_fraction: f64,
    seed: u64,
) -> Result<BenchmarkSet> {
    if per_bucket == 0 {
        return Err(Error::Config("per_bucket must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&holdout_fraction) {
        return Err(Error::Config(format!("holdout fraction must be in [0, 1), got {holdout_fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buckets = Vec::with_capacity(BUCKET_INTERVALS.len());
    let mut training_holdout = Vec::new();
    for interval in BUCKET_INTERVALS {
        let candidates: Vec<&LabeledExample> = examples.iter().filter(|e| interval.contains(e.label)).collect();
        let take = per_bucket.min(candidates.len());
        let picked = rand::seq::index::sample(&mut rng, candidates.len(), take);
        let n_hold = holdout_count(holdout_fraction, take);
        let mut holdout = Vec::with_capacity(n_hold);
        let mut kept = Vec::with_capacity(take - n_hold);
        for (k, idx) in picked.into_iter().enumerate() {
            if k < n_hold {
                holdout.push(candidates[idx].id.clone());
            } else {
                kept.push(candidates[idx].clone());
            }
        }
        let warning = (take < per_bucket).then(|| {
            format!(
                "bucket [{}, {}{} has {} of {} requested examples",
                interval.lower,
                interval.upper,
                if interval.upper_inclusive { "]" } else { ")" },
                take,
                per_bucket
            )
        });
        training_holdout.extend(holdout.iter().cloned());
        buckets.push(Bucket { interval, examples: kept, holdout, warning });
    }
    Ok(BenchmarkSet { buckets, training_holdout, judged: Vec::new() })
}

/// Source of per-comment toxicity scores in `[0, 1]`.
pub trait CommentScorer {
    fn score(&self, comment_id: &str, text: &str) -> Result<f64>;
}

/// Scorer backed by precomputed `{id, score}` records.
#[derive(Debug, Clone, Default)]
pub struct FileCommentScorer {
    scores: HashMap<String, f64>,
}

#[derive(Deserialize)]
struct ScoreRecord {
    id: String,
    score: f64,
}

impl FileCommentScorer {
    pub fn from_reader<R: BufRead>(input: R) -> Result<Self> {
        let records: Vec<ScoreRecord> = read_jsonl(input)?;
        let mut scores = HashMap::with_capacity(records.len());
        for r in records {
            if !(0.0..=1.0).contains(&r.score) {
                return Err(Error::Parse(format!("comment {}: score {} outside [0, 1]", r.id, r.score)));
            }
            scores.insert(r.id, r.score);
        }
        Ok(Self { scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

impl CommentScorer for FileCommentScorer {
    fn score(&self, comment_id: &str, _text: &str) -> Result<f64> {
        self.scores.get(comment_id).copied().ok_or_else(|| Error::Parse(format!("no score for comment '{comment_id}'")))
    }
}
