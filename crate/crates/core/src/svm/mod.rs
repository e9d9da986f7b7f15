//! Binary soft-margin SVMs with linear and RBF kernels.

mod kernel;
mod smo;

pub use kernel::{kernel_eval, scale_gamma, Kernel};
pub use smo::{dual_objective, DualSolution};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Box constraint.
    pub c: f64,
    /// Maximal tolerated KKT violation.
    pub tol: f64,
    /// Iteration budget in units of the sample count.
    pub max_passes: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-3,
            max_passes: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidParameter(format!("C must be > 0, got {}", self.c)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_passes == 0 {
            return Err(Error::InvalidParameter("max_passes must be >= 1".into()));
        }
        Ok(())
    }
}

/// A trained binary classifier. Label `-1` stands for `class_pair.0`,
/// `+1` for `class_pair.1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub kernel: Kernel,
    pub support_vectors: Vec<Vec<f64>>,
    /// Dual coefficient of each support vector, in `(0, C]`.
    pub dual_coeffs: Vec<f64>,
    pub labels: Vec<i8>,
    pub bias: f64,
    pub c: f64,
    pub class_pair: (usize, usize),
    /// `w = sum a_i y_i x_i`; present for linear kernels only.
    pub primal_weights: Option<Vec<f64>>,
    /// Row index of each support vector within the training subset.
    pub support_indices: Vec<usize>,
    pub converged: bool,
    pub iterations: usize,
    pub dual_objective: f64,
}

impl BinarySvm {
    pub fn dims(&self) -> usize {
        self.support_vectors
            .first()
            .map(Vec::len)
            .or_else(|| self.primal_weights.as_ref().map(Vec::len))
            .unwrap_or(0)
    }

    pub fn num_support_vectors(&self) -> usize {
        self.support_vectors.len()
    }

    /// `sum a_i y_i K(x_i, x) + b`.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if let Some(sv) = self.support_vectors.first() {
            if sv.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: sv.len(),
                    found: x.len(),
                });
            }
        }
        Ok(self.decision_value_unchecked(x))
    }

    pub(crate) fn decision_value_unchecked(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coeffs)
            .zip(&self.labels)
            .map(|((sv, &a), &y)| a * f64::from(y) * self.kernel.eval_unchecked(sv, x))
            .sum::<f64>()
            + self.bias
    }

    /// `wᵀx + b` for linear models.
    pub fn decision_value_primal(&self, x: &[f64]) -> Result<f64> {
        let w = self.primal_weights.as_ref().ok_or(Error::WrongKernel {
            expected: "linear",
            found: self.kernel.name(),
        })?;
        if w.len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: w.len(),
                found: x.len(),
            });
        }
        Ok(kernel::dot(w, x) + self.bias)
    }

    /// 1 when the second class of the pair wins. A decision value of
    /// exactly zero yields 0.
    pub fn predict(&self, x: &[f64]) -> Result<u8> {
        Ok(decision_bit(self.decision_value(x)?))
    }

    /// Largest KKT violation over a training set this model was fitted on.
    /// Samples not among the support vectors are taken to have `a = 0`.
    pub fn kkt_violation(&self, x: &[Vec<f64>], y: &[i8]) -> f64 {
        let mut alpha = vec![0.0; x.len()];
        for (&idx, &a) in self.support_indices.iter().zip(&self.dual_coeffs) {
            if idx < alpha.len() {
                alpha[idx] = a;
            }
        }
        x.iter()
            .zip(y)
            .zip(&alpha)
            .map(|((xi, &yi), &a)| {
                let margin = f64::from(yi) * self.decision_value_unchecked(xi);
                if a <= 0.0 {
                    (1.0 - margin).max(0.0)
                } else if a >= self.c {
                    (margin - 1.0).max(0.0)
                } else {
                    (margin - 1.0).abs()
                }
            })
            .fold(0.0, f64::max)
    }
}

pub fn decision_bit(value: f64) -> u8 {
    u8::from(value > 0.0)
}

pub fn decision_value(model: &BinarySvm, x: &[f64]) -> Result<f64> {
    model.decision_value(x)
}

pub fn predict_binary(model: &BinarySvm, x: &[f64]) -> Result<u8> {
    model.predict(x)
}

/// Trains a C-SVC on samples labeled ±1.
pub fn train_binary(x: &[Vec<f64>], y: &[i8], kernel: Kernel, cfg: &TrainConfig, class_pair: (usize, usize)) -> Result<BinarySvm> {
    cfg.validate()?;
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if let Some(&bad) = y.iter().find(|&&v| v != 1 && v != -1) {
        return Err(Error::InvalidParameter(format!("label {bad} is not ±1")));
    }
    if x.len() < 2 || !y.contains(&1) || !y.contains(&-1) {
        return Err(Error::SingleClass);
    }
    let d = x[0].len();
    if let Some(row) = x.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: row.len(),
        });
    }

    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let gram = smo::gram_matrix(&kernel, x);
    let max_iter = cfg.max_passes.saturating_mul(x.len().max(100));
    let sol = smo::solve(&gram, &yf, cfg.c, cfg.tol, max_iter);
    if !sol.converged {
        log::warn!("SMO did not converge for pair {:?} after {} iterations", class_pair, sol.iterations);
    }
    Ok(from_solution(x, y, kernel, cfg.c, class_pair, &sol))
}

/// Solves the dual only, without packaging a model.
pub fn solve_dual(x: &[Vec<f64>], y: &[i8], kernel: Kernel, cfg: &TrainConfig) -> Result<DualSolution> {
    let model = train_binary(x, y, kernel, cfg, (0, 1))?;
    let mut alphas = vec![0.0; x.len()];
    for (&i, &a) in model.support_indices.iter().zip(&model.dual_coeffs) {
        alphas[i] = a;
    }
    Ok(DualSolution {
        alphas,
        bias: model.bias,
        iterations: model.iterations,
        converged: model.converged,
        objective: model.dual_objective,
    })
}

fn from_solution(x: &[Vec<f64>], y: &[i8], kernel: Kernel, c: f64, class_pair: (usize, usize), sol: &DualSolution) -> BinarySvm {
    let support_indices: Vec<usize> = (0..x.len()).filter(|&i| sol.alphas[i] > 0.0).collect();
    let support_vectors: Vec<Vec<f64>> = support_indices.iter().map(|&i| x[i].clone()).collect();
    let dual_coeffs: Vec<f64> = support_indices.iter().map(|&i| sol.alphas[i]).collect();
    let labels: Vec<i8> = support_indices.iter().map(|&i| y[i]).collect();
    let primal_weights = matches!(kernel, Kernel::Linear).then(|| {
        let d = x[0].len();
        let mut w = vec![0.0; d];
        for ((sv, &a), &l) in support_vectors.iter().zip(&dual_coeffs).zip(&labels) {
            for (wk, xk) in w.iter_mut().zip(sv) {
                *wk += a * f64::from(l) * xk;
            }
        }
        w
    });
    BinarySvm {
        kernel,
        support_vectors,
        dual_coeffs,
        labels,
        bias: sol.bias,
        c,
        class_pair,
        primal_weights,
        support_indices,
        converged: sol.converged,
        iterations: sol.iterations,
        dual_objective: sol.objective,
    }
}
