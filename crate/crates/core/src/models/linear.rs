//! Linear heads over sparse bag-of-words features.

use serde::{Deserialize, Serialize};

use super::Differentiable;
use crate::beta::{BetaParams, LOG_PARAM_CLAMP};
use crate::error::{Error, Result};
use crate::featurize::FeatureVector;

/// Two linear heads producing `ln α` and `ln β` from the same features.
///
/// Parameter layout: `[w_α (dim), b_α, w_β (dim), b_β]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBetaModel {
    dim: usize,
    params: Vec<f64>,
}

impl LinearBetaModel {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, params: vec![0.0; 2 * dim + 2] }
    }

    pub fn from_heads(
        alpha_weights: Vec<f64>,
        alpha_bias: f64,
        beta_weights: Vec<f64>,
        beta_bias: f64,
    ) -> Result<Self> {
        if alpha_weights.len() != beta_weights.len() {
            return Err(Error::shape(alpha_weights.len(), beta_weights.len()));
        }
        let dim = alpha_weights.len();
        let mut params = alpha_weights;
        params.push(alpha_bias);
        params.extend(beta_weights);
        params.push(beta_bias);
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain("non-finite model weight".into()));
        }
        Ok(Self { dim, params })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha_weights(&self) -> &[f64] {
        &self.params[..self.dim]
    }

    pub fn alpha_bias(&self) -> f64 {
        self.params[self.dim]
    }

    pub fn beta_weights(&self) -> &[f64] {
        &self.params[self.dim + 1..2 * self.dim + 1]
    }

    pub fn beta_bias(&self) -> f64 {
        self.params[2 * self.dim + 1]
    }

    fn check(&self, x: &FeatureVector) -> Result<()> {
        if x.dim() != self.dim {
            return Err(Error::shape(self.dim, x.dim()));
        }
        Ok(())
    }

    /// Unclamped head outputs `(ln α, ln β)`.
    pub fn heads(&self, x: &FeatureVector) -> Result<(f64, f64)> {
        self.check(x)?;
        Ok((x.dot(self.alpha_weights()) + self.alpha_bias(), x.dot(self.beta_weights()) + self.beta_bias()))
    }

    pub fn predict_params(&self, x: &FeatureVector) -> Result<BetaParams<f64>> {
        let (za, zb) = self.heads(x)?;
        BetaParams::from_log(za, zb)
    }
}

fn inside_clamp(z: f64) -> bool {
    z.abs() <= LOG_PARAM_CLAMP
}

impl Differentiable for LinearBetaModel {
    type Input = FeatureVector;

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn loss_and_grad(&self, x: &FeatureVector, y: f64, scale: f64, grad: &mut [f64]) -> f64 {
        let (za, zb) = self.heads(x).expect("training features match the model");
        let p = match BetaParams::from_log(za, zb) {
            Ok(p) => p,
            Err(_) => return f64::NAN,
        };
        let (mut ga, mut gb) = p.grad_nll_log(y);
        if !inside_clamp(za) {
            ga = 0.0;
        }
        if !inside_clamp(zb) {
            gb = 0.0;
        }
        let d = self.dim;
        for &(j, v) in x.entries() {
            grad[j] += scale * ga * v;
            grad[d + 1 + j] += scale * gb * v;
        }
        grad[d] += scale * ga;
        grad[2 * d + 1] += scale * gb;
        -p.log_pdf(y)
    }

    fn loss(&self, x: &FeatureVector, y: f64) -> f64 {
        match self.predict_params(x) {
            Ok(p) => -p.log_pdf(y),
            Err(_) => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointLoss {
    Mae,
    Mse,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Logistic-squashed linear regressor trained with MAE or MSE.
///
/// Parameter layout: `[w (dim), b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPointModel {
    dim: usize,
    params: Vec<f64>,
    loss: PointLoss,
}

impl LinearPointModel {
    pub fn zeros(dim: usize, loss: PointLoss) -> Self {
        Self { dim, params: vec![0.0; dim + 1], loss }
    }

    pub fn from_parts(weights: Vec<f64>, bias: f64, loss: PointLoss) -> Result<Self> {
        let dim = weights.len();
        let mut params = weights;
        params.push(bias);
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain("non-finite model weight".into()));
        }
        Ok(Self { dim, params, loss })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.params[..self.dim]
    }

    pub fn bias(&self) -> f64 {
        self.params[self.dim]
    }

    pub fn loss_kind(&self) -> PointLoss {
        self.loss
    }

    /// Linear score before squashing.
    pub fn logit(&self, x: &FeatureVector) -> Result<f64> {
        if x.dim() != self.dim {
            return Err(Error::shape(self.dim, x.dim()));
        }
        Ok(x.dot(self.weights()) + self.bias())
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<f64> {
        Ok(sigmoid(self.logit(x)?))
    }
}

/// Point loss and its derivative with respect to the prediction.
pub fn point_loss(kind: PointLoss, prediction: f64, label: f64) -> (f64, f64) {
    let r = prediction - label;
    match kind {
        PointLoss::Mae => {
            let slope = if r > 0.0 {
                1.0
            } else if r < 0.0 {
                -1.0
            } else {
                0.0
            };
            (r.abs(), slope)
        }
        PointLoss::Mse => (r * r, 2.0 * r),
    }
}

impl Differentiable for LinearPointModel {
    type Input = FeatureVector;

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn loss_and_grad(&self, x: &FeatureVector, y: f64, scale: f64, grad: &mut [f64]) -> f64 {
        let pred = self.predict(x).expect("training features match the model");
        let (loss, dpred) = point_loss(self.loss, pred, y);
        let dz = scale * dpred * pred * (1.0 - pred);
        for &(j, v) in x.entries() {
            grad[j] += dz * v;
        }
        grad[self.dim] += dz;
        loss
    }

    fn loss(&self, x: &FeatureVector, y: f64) -> f64 {
        match self.predict(x) {
            Ok(p) => point_loss(self.loss, p, y).0,
            Err(_) => f64::NAN,
        }
    }
}
