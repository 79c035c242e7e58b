//! Evaluation statistics: rank correlations, point errors, precision-recall
//! curves and inter-annotator agreement.

mod agreement;
mod pr;
mod rank;

pub use agreement::{coarse_agreement, cohens_kappa, confusion, ConfusionMatrix};
pub use pr::{pr_curve, PrCurve};
pub use rank::{average_ranks, kendall_tau_b, spearman_rho, Correlation};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn check_pair<T>(x: &[T], y: &[T], min_len: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::shape(x.len(), y.len()));
    }
    if x.len() < min_len {
        return Err(Error::degenerate(format!("need at least {min_len} paired values, got {}", x.len())));
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    check_pair(x, y, 1)?;
    let total: T = x.iter().zip(y).map(|(&a, &b)| (a - b).abs()).sum();
    Ok(total / T::from_usize_lossy(x.len()))
}

/// Root mean squared error.
pub fn rmse<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    check_pair(x, y, 1)?;
    let total: T = x.iter().zip(y).map(|(&a, &b)| (a - b) * (a - b)).sum();
    Ok((total / T::from_usize_lossy(x.len())).sqrt())
}

/// Ranking and point-error summary of predictions against labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport<T> {
    pub kendall: T,
    pub spearman: T,
    pub mae: T,
    pub rmse: T,
    pub n: usize,
    /// Set when one side was fully tied and the rank metrics were reported as 0.
    pub kendall_degenerate: bool,
    pub spearman_degenerate: bool,
}

impl<T: Scalar> MetricsReport<T> {
    pub fn compute(predictions: &[T], labels: &[T]) -> Result<Self> {
        check_pair(predictions, labels, 2)?;
        let kendall = kendall_tau_b(predictions, labels)?;
        let spearman = spearman_rho(predictions, labels)?;
        Ok(Self {
            kendall: kendall.value,
            spearman: spearman.value,
            mae: mae(predictions, labels)?,
            rmse: rmse(predictions, labels)?,
            n: predictions.len(),
            kendall_degenerate: kendall.degenerate,
            spearman_degenerate: spearman.degenerate,
        })
    }
}
