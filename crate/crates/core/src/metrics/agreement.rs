use std::fmt::Debug;

use serde::Serialize;

use crate::error::{Error, Result};

/// Square count matrix over an ordered label set; rows index the first rater.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix<L> {
    labels: Vec<L>,
    counts: Vec<Vec<u64>>,
}

impl<L: PartialEq + Clone + Debug> ConfusionMatrix<L> {
    /// Builds a matrix from explicit counts (`counts[i][j]`: first rater `i`, second rater `j`).
    pub fn from_counts(labels: Vec<L>, counts: Vec<Vec<u64>>) -> Result<Self> {
        if counts.len() != labels.len() {
            return Err(Error::shape(labels.len(), counts.len()));
        }
        if let Some(row) = counts.iter().find(|r| r.len() != labels.len()) {
            return Err(Error::shape(labels.len(), row.len()));
        }
        Ok(Self { labels, counts })
    }

    pub fn labels(&self) -> &[L] {
        &self.labels
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i][j]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_totals(&self) -> Vec<u64> {
        (0..self.labels.len()).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.row_totals().iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    fn index_of(&self, label: &L) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Parse(format!("label {label:?} not in label order")))
    }
}

/// `counts[i][j] = #{n : a_n = order[i], b_n = order[j]}`.
pub fn confusion<L: PartialEq + Clone + Debug>(
    labels_a: &[L],
    labels_b: &[L],
    order: &[L],
) -> Result<ConfusionMatrix<L>> {
    if labels_a.len() != labels_b.len() {
        return Err(Error::shape(labels_a.len(), labels_b.len()));
    }
    let k = order.len();
    let mut m = ConfusionMatrix { labels: order.to_vec(), counts: vec![vec![0; k]; k] };
    for (a, b) in labels_a.iter().zip(labels_b) {
        let i = m.index_of(a)?;
        let j = m.index_of(b)?;
        m.counts[i][j] += 1;
    }
    Ok(m)
}

/// Cohen's kappa `(p_o - p_e) / (1 - p_e)`.
pub fn cohens_kappa<L: PartialEq + Clone + Debug>(m: &ConfusionMatrix<L>) -> Result<f64> {
    let n = m.total();
    if n == 0 {
        return Err(Error::degenerate("kappa of an empty confusion matrix"));
    }
    let rows = m.row_totals();
    let cols = m.col_totals();
    let chance: u128 = rows.iter().zip(&cols).map(|(&r, &c)| r as u128 * c as u128).sum();
    let n2 = n as u128 * n as u128;
    if chance == n2 {
        return Err(Error::degenerate("expected chance agreement is 1"));
    }
    let observed = m.trace() as f64 / n as f64;
    let expected = chance as f64 / n2 as f64;
    Ok((observed - expected) / (1.0 - expected))
}

/// Share of items where both raters fall in the low block or both in the high block.
pub fn coarse_agreement<L: PartialEq + Clone + Debug>(
    m: &ConfusionMatrix<L>,
    low_block: &[L],
    high_block: &[L],
) -> Result<f64> {
    let low = low_block.iter().map(|l| m.index_of(l)).collect::<Result<Vec<_>>>()?;
    let high = high_block.iter().map(|l| m.index_of(l)).collect::<Result<Vec<_>>>()?;
    if low.iter().any(|i| high.contains(i)) {
        return Err(Error::Config("agreement blocks must be disjoint".into()));
    }
    let n = m.total();
    if n == 0 {
        return Err(Error::degenerate("agreement of an empty confusion matrix"));
    }
    let block = |idx: &[usize]| -> u64 {
        idx.iter().flat_map(|&i| idx.iter().map(move |&j| (i, j))).map(|(i, j)| m.counts[i][j]).sum()
    };
    Ok((block(&low) + block(&high)) as f64 / n as f64)
}
