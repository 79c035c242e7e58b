use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Precision-recall points after each distinct score threshold, plus step-wise average precision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrCurve<T> {
    /// `(recall, precision)` pairs, recall non-decreasing.
    pub points: Vec<(T, T)>,
    pub area: T,
    pub positives: usize,
}

impl<T: Scalar> PrCurve<T> {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("recall,precision\n");
        for (r, p) in &self.points {
            out.push_str(&format!("{r},{p}\n"));
        }
        out
    }
}

/// Sweeps thresholds from the highest score down; equal scores enter together.
///
/// Area is `Σ (R_i - R_{i-1}) P_i`.
pub fn pr_curve<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<PrCurve<T>> {
    if scores.len() != labels.len() {
        return Err(Error::shape(scores.len(), labels.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Domain("NaN score in precision-recall input".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(Error::degenerate("precision-recall curve needs at least one positive"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));

    let total_pos = T::from_usize_lossy(positives);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = T::zero();
    let mut area = T::zero();
    let mut points = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let score = scores[order[i]];
        while i < order.len() && scores[order[i]] == score {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = T::from_usize_lossy(tp) / total_pos;
        let precision = T::from_usize_lossy(tp) / T::from_usize_lossy(tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        points.push((recall, precision));
    }
    Ok(PrCurve { points, area: area.min(T::one()), positives })
}
