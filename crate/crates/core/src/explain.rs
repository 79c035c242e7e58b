//! Token attributions for a single prediction.
//!
//! Gradient schemes (SM, DP, HB) backpropagate the mean or mode of the
//! predicted Beta into each position's embedding. AS deletes one position at a
//! time and rescores; RC credits each token with the weighted activation of
//! every n-gram it belongs to.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use crate::beta::Estimator as Objective;
use crate::beta::{BetaParams, LOG_PARAM_CLAMP};
use crate::error::{Error, Result};
use crate::featurize::{ngram_spans, TokenSequence};
use crate::models::{EmbeddingBetaModel, PropensityModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Scheme {
    Sm,
    Dp,
    Hb,
    As,
    Rc,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::Sm, Scheme::Dp, Scheme::Hb, Scheme::As, Scheme::Rc];

    pub fn code(self) -> &'static str {
        match self {
            Scheme::Sm => "SM",
            Scheme::Dp => "DP",
            Scheme::Hb => "HB",
            Scheme::As => "AS",
            Scheme::Rc => "RC",
        }
    }

    pub fn is_gradient(self) -> bool {
        matches!(self, Scheme::Sm | Scheme::Dp | Scheme::Hb)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown attribution scheme '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Attribution {
    pub token: String,
    pub position: usize,
    /// Byte span of the token in the scored text.
    pub start: usize,
    pub end: usize,
    #[serde(rename = "value")]
    pub signed_value: f64,
    pub magnitude: f64,
    pub scheme: Scheme,
    pub objective: Objective,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Explanation {
    pub attributions: Vec<Attribution>,
    /// Objective actually explained (mode falls back to mean when undefined).
    pub objective: Objective,
    pub fallback: bool,
}

/// `∂f/∂e` at each position that survives truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingGradients {
    /// Original token positions, aligned with `gradients`.
    pub positions: Vec<usize>,
    pub rows: Vec<usize>,
    pub gradients: Vec<Vec<f64>>,
    pub value: f64,
    pub objective: Objective,
    pub fallback: bool,
}

/// Objective value and its gradient with respect to `(ln α, ln β)`.
/// Returns the objective actually used and whether the mode fell back.
pub fn objective_log_grad(p: &BetaParams<f64>, objective: Objective) -> (f64, f64, f64, Objective, bool) {
    let (a, b) = (p.alpha(), p.beta());
    if objective == Objective::Mode && a > 1.0 && b > 1.0 {
        let s = a + b - 2.0;
        let value = (a - 1.0) / s;
        return (value, a * (b - 1.0) / (s * s), -b * (a - 1.0) / (s * s), Objective::Mode, false);
    }
    let s = a + b;
    let d = a * b / (s * s);
    (a / s, d, -d, Objective::Mean, objective == Objective::Mode)
}

/// Exact backpropagated gradient of the mean (or mode) with respect to each
/// position's embedding. Repeated tokens get separate per-position gradients.
pub fn gradient_wrt_embeddings(
    model: &EmbeddingBetaModel,
    tokens: &TokenSequence,
    objective: Objective,
) -> Result<EmbeddingGradients> {
    let positions = model.config().truncation.kept_positions(tokens.len());
    let rows = model.encode(tokens);
    let vectors = model.embed(&rows);
    let fwd = model.forward_embedded(&vectors);
    let p = fwd.params()?;
    let (value, mut da, mut db, used, fallback) = objective_log_grad(&p, objective);
    if fwd.logit_alpha.abs() > LOG_PARAM_CLAMP {
        da = 0.0;
    }
    if fwd.logit_beta.abs() > LOG_PARAM_CLAMP {
        db = 0.0;
    }
    let (ua, _) = model.alpha_head();
    let (ub, _) = model.beta_head();
    let d_pooled: Vec<f64> = ua.iter().zip(ub).map(|(x, y)| da * x + db * y).collect();
    let gradients = model.position_gradients(&vectors, &fwd, &d_pooled);
    Ok(EmbeddingGradients { positions, rows, gradients, value, objective: used, fallback })
}

fn record(
    tokens: &TokenSequence,
    position: usize,
    signed: f64,
    magnitude: f64,
    scheme: Scheme,
    objective: Objective,
) -> Attribution {
    let t = &tokens.tokens()[position];
    Attribution {
        token: t.text.clone(),
        position,
        start: t.start,
        end: t.end,
        signed_value: signed,
        magnitude,
        scheme,
        objective,
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn gradient_scheme(
    model: &EmbeddingBetaModel,
    tokens: &TokenSequence,
    scheme: Scheme,
    objective: Objective,
) -> Result<Explanation> {
    let g = gradient_wrt_embeddings(model, tokens, objective)?;
    let attributions = g
        .positions
        .iter()
        .zip(&g.rows)
        .zip(&g.gradients)
        .map(|((&pos, &row), grad)| {
            let sm = norm(grad);
            let dp: f64 = model.embedding(row).iter().zip(grad).map(|(e, d)| e * d).sum();
            let (signed, magnitude) = match scheme {
                Scheme::Sm => (sm, sm),
                Scheme::Dp => (dp, dp.abs()),
                _ => {
                    let hb = if dp < 0.0 {
                        -sm
                    } else if dp > 0.0 {
                        sm
                    } else {
                        0.0
                    };
                    (hb, hb.abs())
                }
            };
            record(tokens, pos, signed, magnitude, scheme, g.objective)
        })
        .collect();
    Ok(Explanation { attributions, objective: g.objective, fallback: g.fallback })
}

/// Prediction being explained: the Beta mean or mode, or a point model's output.
fn objective_value(model: &PropensityModel, tokens: &TokenSequence, objective: Objective) -> Result<(f64, bool)> {
    let s = model.score_tokens(tokens, objective)?;
    Ok((s.value, s.fallback))
}

fn ablation(model: &PropensityModel, tokens: &TokenSequence, objective: Objective) -> Result<Explanation> {
    if tokens.len() < 2 {
        return Err(Error::degenerate("ablation needs at least two tokens"));
    }
    let (full, fallback) = objective_value(model, tokens, objective)?;
    // An undefined mode at the full input switches the whole explanation to the mean.
    let used = if fallback { Objective::Mean } else { objective };
    let mut any_fallback = fallback;
    let mut attributions = Vec::with_capacity(tokens.len());
    for l in 0..tokens.len() {
        let (reduced, fb) = objective_value(model, &tokens.without(l), used)?;
        any_fallback |= fb;
        let delta = full - reduced;
        attributions.push(record(tokens, l, delta, delta.abs(), Scheme::As, used));
    }
    Ok(Explanation { attributions, objective: used, fallback: any_fallback })
}

fn regression_coefficients(
    model: &PropensityModel,
    tokens: &TokenSequence,
    objective: Objective,
) -> Result<Explanation> {
    let PropensityModel::LinearPoint { vocab, model: linear, .. } = model else {
        return Err(Error::Config(format!("RC attributions need a linear point model, not {}", model.kind())));
    };
    let x = model.features(tokens)?;
    let mut credit = vec![0.0; tokens.len()];
    for span in ngram_spans(&tokens.texts()) {
        if let Some(j) = vocab.index_of(&span.term) {
            let c = linear.weights()[j] * x.get(j);
            for slot in &mut credit[span.start..span.start + span.len] {
                *slot += c;
            }
        }
    }
    let attributions =
        credit.into_iter().enumerate().map(|(l, c)| record(tokens, l, c, c.abs(), Scheme::Rc, objective)).collect();
    Ok(Explanation { attributions, objective, fallback: false })
}

/// Checks that `scheme` can explain `model`.
pub fn check_compatible(model: &PropensityModel, scheme: Scheme) -> Result<()> {
    let ok = match scheme {
        Scheme::Sm | Scheme::Dp | Scheme::Hb => matches!(model, PropensityModel::EmbeddingBeta(_)),
        Scheme::Rc => matches!(model, PropensityModel::LinearPoint { .. }),
        Scheme::As => true,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("scheme {scheme} cannot explain a {} model", model.kind())))
    }
}

pub fn attribute(
    model: &PropensityModel,
    tokens: &TokenSequence,
    scheme: Scheme,
    objective: Objective,
) -> Result<Explanation> {
    check_compatible(model, scheme)?;
    match (scheme, model) {
        (Scheme::As, _) => ablation(model, tokens, objective),
        (Scheme::Rc, _) => regression_coefficients(model, tokens, objective),
        (_, PropensityModel::EmbeddingBeta(m)) => gradient_scheme(m, tokens, scheme, objective),
        _ => unreachable!("compatibility checked"),
    }
}

/// Indices into `attributions` of the `k` largest magnitudes, ties to the earlier position.
pub fn top_k(attributions: &[Attribution], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..attributions.len()).collect();
    idx.sort_by(|&i, &j| {
        let (a, b) = (&attributions[i], &attributions[j]);
        b.magnitude.total_cmp(&a.magnitude).then(a.position.cmp(&b.position))
    });
    idx.truncate(k);
    idx
}

/// Default k when none is requested: a tenth of the tokens, at least one.
pub fn auto_k(n_tokens: usize) -> usize {
    n_tokens.div_ceil(10).max(1)
}

/// Fraction of annotated tokens present among the predicted ones (case-insensitive).
pub fn hit_rate<P: AsRef<str>, A: AsRef<str>>(predicted: &[P], annotated: &[A]) -> Result<f64> {
    let annotated: HashSet<String> = annotated.iter().map(|a| a.as_ref().to_lowercase()).collect();
    if annotated.is_empty() {
        return Err(Error::degenerate("no annotated tokens"));
    }
    let predicted: HashSet<String> = predicted.iter().map(|p| p.as_ref().to_lowercase()).collect();
    Ok(annotated.intersection(&predicted).count() as f64 / annotated.len() as f64)
}

fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

/// Standalone HTML page highlighting each attributed token; opacity is the
/// magnitude divided by the largest magnitude. Red raises the score, blue lowers it.
pub fn render_html(text: &str, attributions: &[Attribution]) -> String {
    let max = attributions.iter().map(|a| a.magnitude).fold(0.0_f64, f64::max);
    let mut spans: Vec<&Attribution> = attributions.iter().collect();
    spans.sort_by_key(|a| a.start);
    let mut body = String::new();
    let mut cursor = 0;
    for a in spans {
        if a.start < cursor || a.end > text.len() {
            continue;
        }
        body.push_str(&escape_html(&text[cursor..a.start]));
        let intensity = if max > 0.0 { a.magnitude / max } else { 0.0 };
        let rgb = if a.signed_value < 0.0 { "40,90,220" } else { "220,40,40" };
        body.push_str(&format!(
            "<span style=\"background: rgba({rgb},{intensity:.3})\" title=\"{} {:.6}\">{}</span>",
            a.scheme,
            a.signed_value,
            escape_html(&text[a.start..a.end])
        ));
        cursor = a.end;
    }
    body.push_str(&escape_html(&text[cursor..]));
    format!(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>attribution</title></head>\n\
         <body style=\"font-family: sans-serif; line-height: 1.8; white-space: pre-wrap\">{body}</body></html>\n"
    )
}
