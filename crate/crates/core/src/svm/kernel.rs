use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel function of a binary SVM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    /// `exp(-gamma * |a - b|^2)`, gamma in 1/feature².
    Rbf {
        gamma: f64,
    },
}

impl Kernel {
    pub fn rbf(gamma: f64) -> Result<Self> {
        if gamma > 0.0 && gamma.is_finite() {
            Ok(Kernel::Rbf { gamma })
        } else {
            Err(Error::InvalidParameter(format!("RBF gamma must be > 0, got {gamma}")))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Linear => "linear",
            Kernel::Rbf { .. } => "rbf",
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match *self {
            Kernel::Linear => None,
            Kernel::Rbf { gamma } => Some(gamma),
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                found: b.len(),
            });
        }
        Ok(self.eval_unchecked(a, b))
    }

    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(a, b),
            Kernel::Rbf { gamma } => (-gamma * squared_distance(a, b)).exp(),
        }
    }
}

pub fn kernel_eval(kernel: &Kernel, a: &[f64], b: &[f64]) -> Result<f64> {
    kernel.eval(a, b)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The `gamma = "scale"` default: `1 / (D * Var(X))`, with the variance
/// taken over every entry of the feature matrix. Falls back to 1 when the
/// matrix has no spread.
pub fn scale_gamma(features: &[Vec<f64>]) -> f64 {
    let d = features.first().map_or(0, Vec::len);
    let n = (features.len() * d) as f64;
    if n == 0.0 {
        return 1.0;
    }
    let mean = features.iter().flatten().sum::<f64>() / n;
    let var = features.iter().flatten().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (d as f64 * var)
    } else {
        1.0
    }
}
