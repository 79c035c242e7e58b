//! Toxicity propensity modelling: Beta regression over article text, point-loss
//! baselines, token-level explanations and the evaluation statistics used to
//! compare them.
//!
//! The numerical core ([`special`], [`beta`], [`metrics`], [`models::adam`]) is
//! generic over [`Scalar`]; the text models work in `f64`.

pub mod artifact;
pub mod beta;
pub mod data;
pub mod error;
pub mod explain;
pub mod featurize;
pub mod metrics;
pub mod models;
mod scalar;
pub mod special;
pub mod synthetic;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type BetaParams64 = beta::BetaParams<f64>;
pub type BetaParams32 = beta::BetaParams<f32>;
pub type PdfCurve64 = beta::PdfCurve<f64>;
pub type MetricsReport64 = metrics::MetricsReport<f64>;
pub type PrCurve64 = metrics::PrCurve<f64>;
pub type AdamState64 = models::adam::AdamState<f64>;
