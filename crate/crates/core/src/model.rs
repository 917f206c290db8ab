//! Linear classifier `x -> w·x + b` with a mean hinge loss.

use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl ModelParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Weights followed by the bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.weights.clone();
        v.push(self.bias);
        v
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        let (bias, weights) = flat
            .split_last()
            .ok_or_else(|| Error::Dimension("empty parameter vector".into()))?;
        Ok(Self {
            weights: weights.to_vec(),
            bias: *bias,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }

    #[inline]
    pub fn margin_row(&self, x: &FeatureMatrix, i: usize) -> f64 {
        x.dot_row(i, &self.weights) + self.bias
    }
}

pub fn margins(theta: &ModelParams, x: &FeatureMatrix) -> Result<Vec<f64>> {
    if theta.dim() != x.ncols() {
        return Err(Error::Dimension(format!(
            "model has {} weights, data has {} columns",
            theta.dim(),
            x.ncols()
        )));
    }
    Ok((0..x.nrows()).map(|i| theta.margin_row(x, i)).collect())
}

/// Positive prediction iff the margin is strictly positive.
#[inline]
pub fn predict(margin: f64) -> u8 {
    u8::from(margin > 0.0)
}

pub fn predictions(margins: &[f64]) -> Vec<u8> {
    margins.iter().map(|&m| predict(m)).collect()
}

pub fn error_rate(margins: &[f64], labels: &[u8]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let wrong = margins
        .iter()
        .zip(labels)
        .filter(|(&m, &y)| predict(m) != y)
        .count();
    wrong as f64 / labels.len() as f64
}

/// Mean hinge loss and its derivative with respect to each margin.
/// At the kink the derivative is zero.
pub fn hinge_from_margins(margins: &[f64], labels: &[u8]) -> (f64, Vec<f64>) {
    let n = labels.len().max(1) as f64;
    let mut value = 0.0;
    let mut dm = vec![0.0; labels.len()];
    for (i, (&m, &y)) in margins.iter().zip(labels).enumerate() {
        let s = 2.0 * f64::from(y) - 1.0;
        let slack = 1.0 - s * m;
        if slack > 0.0 {
            value += slack;
            dm[i] = -s / n;
        }
    }
    (value / n, dm)
}

/// Chain rule from per-example margin derivatives to `(weights, bias)`.
pub fn backprop(x: &FeatureMatrix, dmargin: &[f64]) -> Vec<f64> {
    let d = x.ncols();
    let mut g = vec![0.0; d + 1];
    for (i, &c) in dmargin.iter().enumerate() {
        if c != 0.0 {
            x.add_row_to(i, c, &mut g[..d]);
            g[d] += c;
        }
    }
    g
}

/// Mean hinge loss and its subgradient (weights then bias).
pub fn hinge_objective(theta: &ModelParams, x: &FeatureMatrix, labels: &[u8]) -> Result<(f64, Vec<f64>)> {
    if labels.len() != x.nrows() {
        return Err(Error::Dimension(format!(
            "{} labels for {} rows",
            labels.len(),
            x.nrows()
        )));
    }
    let m = margins(theta, x)?;
    let (value, dm) = hinge_from_margins(&m, labels);
    Ok((value, backprop(x, &dm)))
}
