//! Beta distribution math used by every Beta-headed model: density, loss,
//! gradients through the log link, point estimators, sampling and pdf curves.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::special::{digamma, log_beta_fn};

/// Labels are clamped into `[LABEL_EPS, 1 - LABEL_EPS]` before any density evaluation.
pub const LABEL_EPS: f64 = 1e-6;

/// Bound applied to `ln α` and `ln β` when they come out of a model head.
pub const LOG_PARAM_CLAMP: f64 = 30.0;

#[inline]
pub fn clamp_label<T: Scalar>(y: T) -> T {
    let eps = T::lit(LABEL_EPS);
    y.max(eps).min(T::one() - eps)
}

/// Shape parameters of a Beta distribution. Both are finite and strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaParams<T> {
    alpha: T,
    beta: T,
}

/// A point estimate with a flag recording whether the requested estimator had to fall back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointEstimate<T> {
    pub value: T,
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    #[default]
    Mean,
    Mode,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Mean => "mean",
            Estimator::Mode => "mode",
        })
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(Estimator::Mean),
            "mode" => Ok(Estimator::Mode),
            other => Err(Error::Parse(format!("unknown estimator '{other}'"))),
        }
    }
}

impl<T: Scalar> BetaParams<T> {
    pub fn new(alpha: T, beta: T) -> Result<Self> {
        let ok = |v: T| v.is_finite() && v > T::zero();
        if !ok(alpha) || !ok(beta) {
            return Err(Error::Domain(format!(
                "Beta shape parameters must be finite and positive, got ({alpha}, {beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }

    /// Builds parameters from head outputs `ln α`, `ln β`, clamping both to `±30`.
    ///
    /// Non-finite head outputs are rejected.
    pub fn from_log(log_alpha: T, log_beta: T) -> Result<Self> {
        let bound = T::lit(LOG_PARAM_CLAMP);
        if log_alpha.is_nan() || log_beta.is_nan() {
            return Err(Error::Domain("NaN log shape parameter".into()));
        }
        Self::new(log_alpha.max(-bound).min(bound).exp(), log_beta.max(-bound).min(bound).exp())
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    fn log_norm(&self) -> T {
        log_beta_fn(self.alpha, self.beta).expect("validated shape parameters")
    }

    /// Log density at `y`, with `y` clamped into `[ε, 1-ε]`.
    pub fn log_pdf(&self, y: T) -> T {
        let y = clamp_label(y);
        (self.alpha - T::one()) * y.ln() + (self.beta - T::one()) * (T::one() - y).ln() - self.log_norm()
    }

    pub fn pdf(&self, y: T) -> T {
        self.log_pdf(y).exp()
    }

    /// Gradient of `-log p(y | α, β)` with respect to `(ln α, ln β)`.
    pub fn grad_nll_log(&self, y: T) -> (T, T) {
        let y = clamp_label(y);
        let (a, b) = (self.alpha, self.beta);
        let psi_ab = digamma(a + b).expect("positive");
        let d_alpha = digamma(a).expect("positive") - psi_ab - y.ln();
        let d_beta = digamma(b).expect("positive") - psi_ab - (T::one() - y).ln();
        (a * d_alpha, b * d_beta)
    }

    /// `α / (α + β)`.
    pub fn mean(&self) -> T {
        self.alpha / (self.alpha + self.beta)
    }

    /// `(α - 1) / (α + β - 2)` when both shapes exceed one, otherwise the mean with `fallback` set.
    pub fn mode(&self) -> PointEstimate<T> {
        if self.alpha > T::one() && self.beta > T::one() {
            PointEstimate { value: (self.alpha - T::one()) / (self.alpha + self.beta - T::lit(2.0)), fallback: false }
        } else {
            PointEstimate { value: self.mean(), fallback: true }
        }
    }

    pub fn estimate(&self, estimator: Estimator) -> PointEstimate<T> {
        match estimator {
            Estimator::Mean => PointEstimate { value: self.mean(), fallback: false },
            Estimator::Mode => self.mode(),
        }
    }

    pub fn variance(&self) -> T {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + T::one()))
    }

    /// Density on the uniform grid `y_i = ε + i (1 - 2ε) / (n - 1)`.
    pub fn pdf_curve(&self, n_points: usize) -> Result<PdfCurve<T>> {
        if n_points < 2 {
            return Err(Error::degenerate("pdf curve needs at least two grid points"));
        }
        let eps = T::lit(LABEL_EPS);
        let step = (T::one() - eps - eps) / T::from_usize_lossy(n_points - 1);
        let log_norm = self.log_norm();
        let points = (0..n_points)
            .map(|i| {
                let y = if i + 1 == n_points { T::one() - eps } else { eps + step * T::from_usize_lossy(i) };
                let lp = (self.alpha - T::one()) * y.ln() + (self.beta - T::one()) * (T::one() - y).ln() - log_norm;
                (y, lp.exp())
            })
            .collect();
        Ok(PdfCurve { points })
    }

    /// One draw from `Beta(α, β)`, kept strictly inside `(0, 1)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let dist = rand_distr::Beta::new(self.alpha.to_f64_lossy(), self.beta.to_f64_lossy())
            .expect("validated shape parameters");
        let draw: f64 = dist.sample(rng);
        let draw = draw.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
        T::lit(draw)
    }
}

/// `-log p(y | α, β)` at a single point.
pub fn nll_single<T: Scalar>(y: T, params: &BetaParams<T>) -> T {
    -params.log_pdf(y)
}

/// Mean negative log-likelihood over a batch.
pub fn nll<T: Scalar>(labels: &[T], params: &[BetaParams<T>]) -> Result<T> {
    if labels.len() != params.len() {
        return Err(Error::shape(labels.len(), params.len()));
    }
    if labels.is_empty() {
        return Err(Error::degenerate("nll of an empty batch"));
    }
    let total: T = labels.iter().zip(params).map(|(&y, p)| -p.log_pdf(y)).sum();
    Ok(total / T::from_usize_lossy(labels.len()))
}

/// `(y, density)` pairs over an increasing grid in `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdfCurve<T> {
    pub points: Vec<(T, T)>,
}

impl<T: Scalar> PdfCurve<T> {
    /// Trapezoidal integral of the density over the grid.
    pub fn integrate(&self) -> T {
        self.points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * T::lit(0.5)).sum()
    }

    /// Two-column CSV with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("y,density\n");
        for (y, d) in &self.points {
            out.push_str(&format!("{y},{d}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(a: f64, b: f64) -> BetaParams<f64> {
        BetaParams::new(a, b).unwrap()
    }

    #[test]
    fn log_pdf_examples() {
        assert!(params(1.0, 1.0).log_pdf(0.5).abs() < 1e-14);
        assert!((params(2.0, 2.0).log_pdf(0.5) - 1.5_f64.ln()).abs() < 1e-13);
        let clamped = params(2.0, 0.5).log_pdf(0.999_999 + 1e-7);
        assert!(clamped.is_finite());
        assert_eq!(clamped, params(2.0, 0.5).log_pdf(1.0 - LABEL_EPS));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(BetaParams::new(0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(BetaParams::new(1.0, -2.0), Err(Error::Domain(_))));
        assert!(matches!(BetaParams::new(f64::INFINITY, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn nll_examples() {
        let uniform = params(1.0, 1.0);
        assert!(nll(&[0.5, 0.5], &[uniform, uniform]).unwrap().abs() < 1e-14);
        let v = nll(&[0.5], &[params(2.0, 2.0)]).unwrap();
        assert!((v + 1.5_f64.ln()).abs() < 1e-13);
        let a = nll_single(0.3, &params(2.0, 5.0));
        let b = nll_single(0.8, &params(3.0, 1.5));
        let both = nll(&[0.3, 0.8], &[params(2.0, 5.0), params(3.0, 1.5)]).unwrap();
        assert!((both - (a + b) / 2.0).abs() < 1e-14);
        assert!(matches!(nll(&[0.5], &[]), Err(Error::Shape { .. })));
    }

    #[test]
    fn grad_uniform_half() {
        let (ga, gb) = params(1.0, 1.0).grad_nll_log(0.5);
        let expect = -1.0 + 2.0_f64.ln();
        assert!((ga - expect).abs() < 1e-12);
        assert!((gb - expect).abs() < 1e-12);
        let (ga, gb) = params(3.3, 3.3).grad_nll_log(0.5);
        assert_eq!(ga, gb);
    }

    #[test]
    fn estimators() {
        assert_eq!(params(2.0, 2.0).mean(), 0.5);
        assert_eq!(params(2.0, 6.0).mean(), 0.25);
        assert_eq!(params(0.5, 1.5).mean(), 0.25);
        let m = params(2.0, 6.0).mode();
        assert!((m.value - 1.0 / 6.0).abs() < 1e-15 && !m.fallback);
        assert_eq!(params(2.0, 2.0).mode().value, 0.5);
        let fb = params(0.5, 2.0).mode();
        assert!(fb.fallback);
        assert!((fb.value - 0.2).abs() < 1e-15);
    }

    #[test]
    fn pdf_curve_examples() {
        let c = params(1.0, 1.0).pdf_curve(17).unwrap();
        assert!(c.points.iter().all(|&(_, d)| (d - 1.0).abs() < 1e-12));
        let c = params(2.0, 2.0).pdf_curve(3).unwrap();
        assert!((c.points[1].0 - 0.5).abs() < 1e-15);
        assert!((c.points[1].1 - 1.5).abs() < 1e-12);
        let c = params(2.0, 5.0).pdf_curve(10_001).unwrap();
        assert!((c.integrate() - 1.0).abs() < 1e-3);
        assert!(c.points.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(params(2.0, 5.0).pdf_curve(1).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let csv = params(2.0, 2.0).pdf_curve(3).unwrap().to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "y,density");
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn sampling_moments_and_determinism() {
        let p = params(2.0, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws: Vec<f64> = (0..100_000).map(|_| p.sample(&mut rng)).collect();
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
        assert!((var - 0.05).abs() < 0.005, "var {var}");

        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..32).map(|_| p.sample(&mut a)).collect();
        let ys: Vec<f64> = (0..32).map(|_| p.sample(&mut b)).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn estimator_parse() {
        assert_eq!("MODE".parse::<Estimator>().unwrap(), Estimator::Mode);
        assert!("median".parse::<Estimator>().is_err());
    }

    #[test]
    fn from_log_clamps() {
        let p = BetaParams::from_log(100.0_f64, -100.0).unwrap();
        assert_eq!(p.alpha(), 30.0_f64.exp());
        assert_eq!(p.beta(), (-30.0_f64).exp());
        assert!(BetaParams::from_log(f64::NAN, 0.0).is_err());
    }
}
