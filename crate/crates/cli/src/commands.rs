use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use propensity::artifact::{fingerprint, ModelArtifact, TrainingMetadata};
use propensity::beta::BetaParams;
use propensity::data::{
    compose_text, ingest_stream, join_annotations, read_jsonl, split_by_date, write_jsonl, AnnotationRecord,
    CorpusSplit, LabeledExample,
};
use propensity::explain::render_html;
use propensity::featurize::{build_vocab, fit_nblr, tfidf, tokenize, TokenSequence};
use propensity::metrics::pr_curve;
use propensity::models::{evaluate, train_model, ModelSpec, PropensityModel, TrainConfig};

use crate::args::*;
use crate::failure::Failure;
use crate::service::{self, explain_text, score_text, ScoreResponse};

pub const MANIFEST: &str = "manifest.json";
const PARTS: [&str; 3] = ["train", "validation", "test"];

pub fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Split(a) => split(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Score(a) => score(a),
        Command::Explain(a) => explain(a),
        Command::NblrWeights(a) => nblr_weights(a),
        Command::PdfCurve(a) => pdf_curve(a),
        Command::Bench(a) => bench(a),
        Command::Serve(a) => serve(a),
    }
}

fn is_std(path: &Path) -> bool {
    path.as_os_str() == "-"
}

fn open_input(path: &Path) -> Result<Box<dyn BufRead>, Failure> {
    if is_std(path) {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let f = File::open(path).map_err(|e| Failure::data(path.display(), e))?;
    Ok(Box::new(BufReader::new(f)))
}

fn open_output(path: &Path) -> Result<Box<dyn Write>, Failure> {
    if is_std(path) {
        return Ok(Box::new(BufWriter::new(io::stdout())));
    }
    let f = File::create(path).map_err(|e| Failure::data(path.display(), e))?;
    Ok(Box::new(BufWriter::new(f)))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::data(path.display(), e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::data(path.display(), e))
}

fn read_examples(path: &Path) -> Result<Vec<LabeledExample>, Failure> {
    read_jsonl(open_input(path)?).map_err(|e| Failure::data(path.display(), e))
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), Failure> {
    let mut out = BufWriter::new(io::stdout().lock());
    match write(&mut out).and_then(|()| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Failure::data("stdout", e)),
        _ => Ok(()),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::data("output", e))?;
    emit(|out| writeln!(out, "{text}"))
}

fn load_model(path: &Path) -> Result<ModelArtifact, Failure> {
    service::load(path)
}

fn ingest(a: IngestArgs) -> Result<(), Failure> {
    let input = open_input(&a.input)?;
    let output = open_output(&a.output)?;
    let summary = ingest_stream(input, a.min_comments, output).map_err(|e| Failure::data(a.input.display(), e))?;
    tracing::info!(
        read = summary.read,
        kept = summary.kept,
        dropped_low_volume = summary.dropped_low_volume,
        "ingested"
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub ratios: [f64; 3],
    pub counts: [usize; 3],
    /// SHA-256 of each split file, keyed by split name.
    pub fingerprints: std::collections::BTreeMap<String, String>,
}

fn split(a: SplitArgs) -> Result<(), Failure> {
    let examples = read_examples(&a.input)?;
    let s = split_by_date(&examples, a.ratios)?;
    for part in s.empty_parts() {
        tracing::warn!("{part} split is empty");
    }
    fs::create_dir_all(&a.out_dir).map_err(|e| Failure::data(a.out_dir.display(), e))?;
    let mut fingerprints = std::collections::BTreeMap::new();
    for (name, part) in PARTS.iter().zip([&s.train, &s.validation, &s.test]) {
        let mut bytes = Vec::new();
        write_jsonl(part, &mut bytes).map_err(|e| Failure::data(name, e))?;
        write_bytes(&a.out_dir.join(format!("{name}.jsonl")), &bytes)?;
        fingerprints.insert(name.to_string(), fingerprint(&bytes));
    }
    let manifest = Manifest {
        ratios: [a.ratios.train, a.ratios.validation, a.ratios.test],
        counts: [s.train.len(), s.validation.len(), s.test.len()],
        fingerprints,
    };
    let text = serde_json::to_vec_pretty(&manifest).map_err(|e| Failure::data(MANIFEST, e))?;
    write_bytes(&a.out_dir.join(MANIFEST), &text)?;
    tracing::info!(train = s.train.len(), validation = s.validation.len(), test = s.test.len(), "split written");
    Ok(())
}

fn train(a: TrainArgs) -> Result<(), Failure> {
    let train_path = a.data.join("train.jsonl");
    let train_bytes = read_bytes(&train_path)?;
    let train: Vec<LabeledExample> =
        read_jsonl(train_bytes.as_slice()).map_err(|e| Failure::data(train_path.display(), e))?;
    let val_path = a.data.join("validation.jsonl");
    let validation = if val_path.exists() {
        read_examples(&val_path)?
    } else {
        tracing::warn!("no validation.jsonl; early stopping uses the training loss");
        Vec::new()
    };
    let split = CorpusSplit { train, validation, test: Vec::new() };

    let mut spec = ModelSpec::new(a.model);
    spec.min_df = a.min_df;
    spec.embedding.dim = a.dim;
    let mut cfg = TrainConfig::for_kind(a.model);
    if let Some(lr) = a.lr {
        cfg.adam.learning_rate = lr;
    }
    cfg.batch_size = a.batch;
    cfg.max_epochs = a.epochs;
    cfg.patience = a.patience;
    cfg.seed = a.seed;
    cfg.validate()?;

    let start = Instant::now();
    let (model, report) = train_model(&spec, &split, &cfg)?;
    let wall = start.elapsed().as_secs_f64();
    let metadata = TrainingMetadata {
        seed: a.seed,
        data_fingerprint: Some(fingerprint(&train_bytes)),
        epochs_run: report.epochs.len(),
        best_epoch: report.best_epoch,
        min_df: a.min_df,
        train_config: Some(cfg),
    };
    ModelArtifact::new(model, metadata).save(&a.output).map_err(|e| Failure::data(a.output.display(), e))?;
    if let Some(path) = &a.report {
        let mut bytes = Vec::new();
        write_jsonl(&report.epochs, &mut bytes).map_err(|e| Failure::data(path.display(), e))?;
        write_bytes(path, &bytes)?;
    }
    tracing::info!(wall_seconds = wall, "training finished");
    print_json(&json!({
        "model_kind": a.model.artifact_name(),
        "output": a.output,
        "epochs_run": report.epochs.len(),
        "best_epoch": report.best_epoch,
        "initial_validation_loss": report.initial_validation_loss,
        "best_validation_loss": report.best_validation_loss,
        "wall_seconds": wall,
    }))
}

/// Training-data fingerprint recorded next to a split file, if any.
fn manifest_fingerprint(data: &Path) -> Result<Option<String>, Failure> {
    let Some(dir) = data.parent() else { return Ok(None) };
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Ok(None);
    }
    let m: Manifest = serde_json::from_slice(&read_bytes(&path)?).map_err(|e| Failure::data(path.display(), e))?;
    Ok(m.fingerprints.get("train").cloned())
}

fn eval(a: EvalArgs) -> Result<(), Failure> {
    let artifact = load_model(&a.model.path)?;
    match (manifest_fingerprint(&a.data)?, &artifact.metadata.data_fingerprint) {
        (Some(split_fp), Some(model_fp)) if &split_fp != model_fp => {
            let msg = format!(
                "model was trained on data {} but {} belongs to a split with training data {}",
                short(model_fp),
                a.data.display(),
                short(&split_fp)
            );
            if !a.allow_fingerprint_mismatch {
                return Err(Failure::Data(format!("{msg} (pass --allow-fingerprint-mismatch to evaluate anyway)")));
            }
            tracing::warn!("{msg}");
        }
        (None, _) | (_, None) => tracing::warn!("cannot verify that the data matches the model's training split"),
        _ => {}
    }
    let examples = read_examples(&a.data)?;
    let e = evaluate(&artifact.model, &examples, a.estimator)?;
    if e.metrics.kendall_degenerate || e.metrics.spearman_degenerate {
        tracing::warn!("predictions or labels are constant; rank metrics reported as 0");
    }
    if let Some(path) = &a.predictions {
        let mut csv = String::from("id,label,prediction\n");
        for (ex, p) in examples.iter().zip(&e.predictions) {
            csv.push_str(&format!("{},{},{}\n", csv_field(&ex.id), ex.label, p));
        }
        write_bytes(path, csv.as_bytes())?;
    }
    print_json(&json!({
        "model_kind": artifact.kind().artifact_name(),
        "estimator": a.estimator,
        "mode_fallbacks": e.mode_fallbacks,
        "metrics": e.metrics,
    }))
}

fn short(fp: &str) -> &str {
    &fp[..fp.len().min(12)]
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Deserialize)]
struct TextRecord {
    id: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    body: String,
}

#[derive(Serialize)]
struct IdentifiedScore<'a> {
    id: &'a str,
    #[serde(flatten)]
    score: ScoreResponse,
}

fn score(a: ScoreArgs) -> Result<(), Failure> {
    let artifact = load_model(&a.model.path)?;
    let Some(input) = &a.input else {
        return print_json(&score_text(&artifact.model, &a.text.title, &a.text.body, a.points)?);
    };
    let records: Vec<TextRecord> = read_jsonl(open_input(input)?).map_err(|e| Failure::data(input.display(), e))?;
    let mut lines = Vec::with_capacity(records.len());
    for r in &records {
        let score = score_text(&artifact.model, &r.title, &r.body, a.points)?;
        lines.push(serde_json::to_string(&IdentifiedScore { id: &r.id, score }).map_err(|e| Failure::data(&r.id, e))?);
    }
    emit(|out| lines.iter().try_for_each(|l| writeln!(out, "{l}")))
}

fn explain(a: ExplainArgs) -> Result<(), Failure> {
    let artifact = load_model(&a.model.path)?;
    let resp = explain_text(&artifact.model, &a.text.title, &a.text.body, a.scheme, a.objective, a.k)?;
    if resp.fallback {
        tracing::warn!("mode undefined; explained the mean instead");
    }
    if let Some(path) = &a.html {
        let text = compose_text(&a.text.title, &a.text.body);
        write_bytes(path, render_html(&text, &resp.attributions).as_bytes())?;
    }
    print_json(&resp)
}

fn nblr_weights(a: NblrWeightsArgs) -> Result<(), Failure> {
    let mut rows: Vec<(String, usize, f64)> = match (&a.model, &a.data) {
        (_, Some(data)) => {
            let examples = read_examples(data)?;
            let docs: Vec<TokenSequence> = examples.iter().map(|e| tokenize(&e.text)).collect();
            let labels: Vec<f64> = examples.iter().map(|e| e.label).collect();
            let vocab = build_vocab(&docs, a.min_df)?;
            let features: Vec<_> = docs.iter().map(|d| tfidf(d, &vocab)).collect();
            let w = fit_nblr(&features, &labels)?;
            vocab.entries().iter().zip(&w.weights).map(|(e, &x)| (e.term.clone(), e.df, x)).collect()
        }
        (Some(path), None) => {
            let artifact = load_model(path)?;
            let PropensityModel::LinearPoint { vocab, nblr: Some(w), .. } = &artifact.model else {
                return Err(Failure::Usage(format!("{} is a {} model, not nblr", path.display(), artifact.kind())));
            };
            vocab.entries().iter().zip(&w.weights).map(|(e, &x)| (e.term.clone(), e.df, x)).collect()
        }
        (None, None) => return Err(Failure::Usage("pass --model or --data".into())),
    };
    rows.sort_by(|x, y| y.2.abs().total_cmp(&x.2.abs()).then_with(|| x.0.cmp(&y.0)));
    if let Some(n) = a.top {
        rows.truncate(n);
    }
    emit(|out| {
        writeln!(out, "term,df,weight")?;
        rows.iter().try_for_each(|(term, df, w)| writeln!(out, "{},{df},{w}", csv_field(term)))
    })
}

fn pdf_curve(a: PdfCurveArgs) -> Result<(), Failure> {
    let params = match (a.alpha, a.beta, &a.model) {
        (Some(alpha), Some(beta), _) => BetaParams::new(alpha, beta).map_err(|e| Failure::Usage(e.to_string()))?,
        (_, _, Some(path)) => {
            let artifact = load_model(path)?;
            let tokens = tokenize(&compose_text(&a.text.title, &a.text.body));
            artifact.model.predict_params(&tokens)?.ok_or_else(|| {
                Failure::Usage(format!("a {} model predicts a point, not a distribution", artifact.kind()))
            })?
        }
        _ => return Err(Failure::Usage("pass --alpha and --beta, or --model".into())),
    };
    let csv = params.pdf_curve(a.points)?.to_csv();
    emit(|out| out.write_all(csv.as_bytes()))
}

#[derive(Serialize)]
struct BenchRow {
    threshold: i32,
    positives: usize,
    n: usize,
    auc_pr: Option<f64>,
}

fn bench(a: BenchArgs) -> Result<(), Failure> {
    let artifact = load_model(&a.model.path)?;
    let examples = read_examples(&a.examples)?;
    let records: Vec<AnnotationRecord> =
        read_jsonl(open_input(&a.annotations)?).map_err(|e| Failure::data(a.annotations.display(), e))?;
    let judged = join_annotations(&examples, &records);
    if judged.is_empty() {
        return Err(Failure::Data("no annotation matches an example id".into()));
    }
    let scores = judged
        .iter()
        .map(|j| artifact.model.score(&j.example.text, a.estimator).map(|s| s.value))
        .collect::<Result<Vec<f64>, _>>()?;
    let rows: Vec<BenchRow> = a
        .thresholds
        .iter()
        .map(|&t| {
            let labels: Vec<bool> = judged.iter().map(|j| j.joint_score >= t).collect();
            let positives = labels.iter().filter(|&&l| l).count();
            let auc_pr = match pr_curve(&scores, &labels) {
                Ok(c) => Some(c.area),
                Err(e) => {
                    tracing::warn!("threshold {t}: {e}");
                    None
                }
            };
            BenchRow { threshold: t, positives, n: judged.len(), auc_pr }
        })
        .collect();
    print_json(&json!({
        "model_kind": artifact.kind().artifact_name(),
        "estimator": a.estimator,
        "judged": judged.len(),
        "results": rows,
    }))
}

fn serve(a: ServeArgs) -> Result<(), Failure> {
    let rt =
        tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(|e| Failure::data("runtime", e))?;
    rt.block_on(service::serve(PathBuf::from(&a.model.path), &a.host, a.port))
}
