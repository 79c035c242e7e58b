use std::cmp::Ordering;

use serde::Serialize;

use super::check_pair;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A correlation coefficient; `degenerate` marks a fully tied input reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation<T> {
    pub value: T,
    pub degenerate: bool,
}

impl<T: Scalar> Correlation<T> {
    fn degenerate() -> Self {
        Self { value: T::zero(), degenerate: true }
    }
}

fn reject_nan<T: Scalar>(xs: &[T]) -> Result<()> {
    if xs.iter().any(|v| v.is_nan()) {
        return Err(Error::Domain("rank statistics are undefined for NaN".into()));
    }
    Ok(())
}

fn cmp<T: Scalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).expect("NaN rejected")
}

/// Number of unordered pairs within runs of equal values in a sorted sequence.
fn tied_pairs<I: Iterator<Item = bool>>(equal_to_prev: I) -> i64 {
    let mut total = 0i64;
    let mut run = 1i64;
    for eq in equal_to_prev {
        if eq {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Merge sort of `values` counting the inversions it removes.
fn sort_counting_swaps<T: Scalar>(values: &mut [T], scratch: &mut [T]) -> i64 {
    let n = values.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (left, right) = values.split_at_mut(mid);
        let (sl, sr) = scratch.split_at_mut(mid);
        sort_counting_swaps(left, sl) + sort_counting_swaps(right, sr)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if cmp(&values[j], &values[i]) == Ordering::Less {
            scratch[k] = values[j];
            swaps += (mid - i) as i64;
            j += 1;
        } else {
            scratch[k] = values[i];
            i += 1;
        }
        k += 1;
    }
    scratch[k..k + mid - i].copy_from_slice(&values[i..mid]);
    k += mid - i;
    scratch[k..k + n - j].copy_from_slice(&values[j..n]);
    values.copy_from_slice(&scratch[..n]);
    swaps
}

/// Kendall's tau-b in O(n log n) (Knight's algorithm).
///
/// `τ_b = (C - D) / sqrt((n0 - n1)(n0 - n2))` where `n1`, `n2` count pairs tied in
/// `x` and `y` respectively. A fully tied side gives 0 with the degenerate flag set.
pub fn kendall_tau_b<T: Scalar>(x: &[T], y: &[T]) -> Result<Correlation<T>> {
    check_pair(x, y, 2)?;
    reject_nan(x)?;
    reject_nan(y)?;
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cmp(&x[a], &x[b]).then_with(|| cmp(&y[a], &y[b])));

    let n0 = (n as i64) * (n as i64 - 1) / 2;
    let n1 = tied_pairs(order.windows(2).map(|w| x[w[0]] == x[w[1]]));
    let n3 = tied_pairs(order.windows(2).map(|w| x[w[0]] == x[w[1]] && y[w[0]] == y[w[1]]));

    let mut ys: Vec<T> = order.iter().map(|&i| y[i]).collect();
    let mut scratch = vec![T::zero(); n];
    let swaps = sort_counting_swaps(&mut ys, &mut scratch);
    let n2 = tied_pairs(ys.windows(2).map(|w| w[0] == w[1]));

    let untied_x = n0 - n1;
    let untied_y = n0 - n2;
    if untied_x == 0 || untied_y == 0 {
        return Ok(Correlation::degenerate());
    }
    let numerator = n0 - n1 - n2 + n3 - 2 * swaps;
    let denom = (T::lit(untied_x as f64) * T::lit(untied_y as f64)).sqrt();
    let value = (T::lit(numerator as f64) / denom).max(-T::one()).min(T::one());
    Ok(Correlation { value, degenerate: false })
}

/// 1-based ranks where tied values share the mean of their rank range.
pub fn average_ranks<T: Scalar>(xs: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| cmp(&xs[a], &xs[b]));
    let mut ranks = vec![T::zero(); xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = T::lit((start + 1 + end) as f64 / 2.0);
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman_rho<T: Scalar>(x: &[T], y: &[T]) -> Result<Correlation<T>> {
    check_pair(x, y, 2)?;
    reject_nan(x)?;
    reject_nan(y)?;
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = T::from_usize_lossy(x.len());
    let mx = rx.iter().copied().sum::<T>() / n;
    let my = ry.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in rx.iter().zip(&ry) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Ok(Correlation::degenerate());
    }
    let value = (sxy / (sxx * syy).sqrt()).max(-T::one()).min(T::one());
    Ok(Correlation { value, degenerate: false })
}
