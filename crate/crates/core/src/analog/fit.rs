//! Ideal-model calibration of measured transfer curves: a Gaussian for the
//! kernel cell and a logistic for the alpha multiplier.

use serde::{Deserialize, Serialize};

use super::device::CurvePoint;
use crate::error::{Error, Result};
use crate::linalg::{least_squares, solve_square};

/// `A0 · exp(-gamma0 (v - mu)²)` fitted to a kernel sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub a0: f64,
    pub gamma0: f64,
    pub mu: f64,
    pub nrmse: f64,
    pub corr: f64,
}

impl GaussianFit {
    pub fn eval(&self, v: f64) -> f64 {
        self.a0 * (-self.gamma0 * (v - self.mu).powi(2)).exp()
    }
}

/// `1 / (1 + exp((v - x0) / s))` fitted to an alpha-multiplier sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaFit {
    pub x0: f64,
    pub s: f64,
    pub nrmse: f64,
    pub corr: f64,
}

impl AlphaFit {
    pub fn eval(&self, v: f64) -> f64 {
        logistic(self.x0, self.s, v)
    }
}

fn logistic(x0: f64, s: f64, v: f64) -> f64 {
    1.0 / (1.0 + ((v - x0) / s).exp())
}

/// Control voltage that realizes ratio `alpha`: `x0 + s ln(1/alpha - 1)`.
pub fn alpha_control(fit: &AlphaFit, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    Ok(fit.x0 + fit.s * (1.0 / alpha - 1.0).ln())
}

/// RMSE divided by the range of the reference values.
pub fn nrmse(reference: &[f64], model: &[f64]) -> f64 {
    let n = reference.len().min(model.len());
    if n == 0 {
        return 0.0;
    }
    let mse = reference.iter().zip(model).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64;
    let (lo, hi) = reference
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if range > 0.0 {
        mse.sqrt() / range
    } else {
        mse.sqrt()
    }
}

/// Pearson correlation; 0 when either side has no spread.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Damped Gauss-Newton on a small parameter vector. `model` returns the
/// residuals and the Jacobian rows for the given parameters.
fn levenberg_marquardt<F>(mut p: Vec<f64>, max_iter: usize, model: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> Option<(Vec<f64>, Vec<Vec<f64>>)>,
{
    let sse = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let Some((mut r, mut jac)) = model(&p) else {
        return p;
    };
    let mut cost = sse(&r);
    let mut lambda = 1e-3;
    let k = p.len();
    for _ in 0..max_iter {
        let mut jtj = vec![vec![0.0; k]; k];
        let mut jtr = vec![0.0; k];
        for (row, ri) in jac.iter().zip(&r) {
            for a in 0..k {
                jtr[a] += row[a] * ri;
                for b in 0..k {
                    jtj[a][b] += row[a] * row[b];
                }
            }
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut damped = jtj.clone();
            for (a, row) in damped.iter_mut().enumerate() {
                row[a] += lambda * jtj[a][a].max(1e-300);
            }
            let rhs: Vec<f64> = jtr.iter().map(|v| -v).collect();
            let Some(step) = solve_square(damped, rhs) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
            match model(&trial) {
                Some((tr, tj)) if sse(&tr) <= cost => {
                    let rel = (cost - sse(&tr)) / cost.max(1e-300);
                    p = trial;
                    cost = sse(&tr);
                    r = tr;
                    jac = tj;
                    lambda = (lambda / 10.0).max(1e-12);
                    improved = rel > 1e-15;
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if !improved {
            break;
        }
    }
    p
}

/// Fits `A0 exp(-gamma0 (v - mu)²)` to a bell-shaped sweep. The initial
/// guess comes from a weighted quadratic fit of `ln I`; the result is then
/// refined by damped Gauss-Newton on the linear-domain residuals.
pub fn fit_gaussian(curve: &[CurvePoint]) -> Result<GaussianFit> {
    if curve.len() < 5 {
        return Err(Error::FitFailed(format!("need at least 5 samples, got {}", curve.len())));
    }
    if curve.iter().any(|(v, i)| !v.is_finite() || !i.is_finite()) {
        return Err(Error::FitFailed("non-finite sample".into()));
    }
    let peak = curve.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let floor = curve.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    if !(peak > 0.0) || peak == floor {
        return Err(Error::FitFailed("curve is degenerate (no positive peak or all equal)".into()));
    }

    // Work in units of the peak so the conditioning does not depend on amps.
    let vs: Vec<f64> = curve.iter().map(|c| c.0).collect();
    let ys: Vec<f64> = curve.iter().map(|c| c.1 / peak).collect();

    let kept: Vec<(f64, f64)> = vs.iter().zip(&ys).filter(|(_, &y)| y >= 1e-6).map(|(&v, &y)| (v, y)).collect();
    if kept.len() < 3 {
        return Err(Error::FitFailed("fewer than 3 samples above the noise floor".into()));
    }
    // Weighting rows by y makes the log-domain residuals approximate the
    // linear-domain ones near the peak.
    let center = kept.iter().map(|p| p.0).sum::<f64>() / kept.len() as f64;
    let rows: Vec<Vec<f64>> = kept
        .iter()
        .map(|&(v, y)| {
            let t = v - center;
            vec![y, y * t, y * t * t]
        })
        .collect();
    let rhs: Vec<f64> = kept.iter().map(|&(_, y)| y * y.ln()).collect();
    let c = least_squares(&rows, &rhs).ok_or_else(|| Error::FitFailed("log-domain system is singular".into()))?;
    if !(c[2] < 0.0) {
        return Err(Error::FitFailed("curve is not bell-shaped (non-negative curvature)".into()));
    }
    let g0 = -c[2];
    let mu0 = c[1] / (2.0 * g0);
    let a0 = (c[0] + g0 * mu0 * mu0).exp();

    let p = levenberg_marquardt(vec![a0, g0, mu0], 100, |p| {
        let (a, g, m) = (p[0], p[1], p[2]);
        if !(g > 0.0 && a > 0.0) {
            return None;
        }
        let mut r = Vec::with_capacity(vs.len());
        let mut jac = Vec::with_capacity(vs.len());
        for (&v, &y) in vs.iter().zip(&ys) {
            let t = v - center - m;
            let e = (-g * t * t).exp();
            r.push(a * e - y);
            jac.push(vec![e, -a * t * t * e, 2.0 * a * g * t * e]);
        }
        Some((r, jac))
    });

    let fit_norm: Vec<f64> = vs.iter().map(|&v| p[0] * (-p[1] * (v - center - p[2]).powi(2)).exp()).collect();
    Ok(GaussianFit {
        a0: p[0] * peak,
        gamma0: p[1],
        mu: p[2] + center,
        nrmse: nrmse(&ys, &fit_norm),
        corr: pearson(&ys, &fit_norm),
    })
}

/// Fits the logistic `1 / (1 + exp((v - x0)/s))` to a non-increasing ratio
/// sweep. Initial values come from a line fit of `ln(1/a - 1)` against `v`.
pub fn fit_alpha(curve: &[CurvePoint]) -> Result<AlphaFit> {
    if curve.len() < 3 {
        return Err(Error::FitFailed(format!("need at least 3 samples, got {}", curve.len())));
    }
    let mut pts = curve.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(&(_, bad)) = pts.iter().find(|(_, a)| !(*a > 0.0 && *a < 1.0)) {
        return Err(Error::FitFailed(format!("ratio {bad} outside (0, 1)")));
    }
    if pts.windows(2).any(|w| w[1].1 > w[0].1) {
        return Err(Error::FitFailed("alpha curve is not monotonically non-increasing".into()));
    }
    if pts.first().map(|p| p.1) == pts.last().map(|p| p.1) {
        return Err(Error::FitFailed("alpha curve is flat".into()));
    }

    let rows: Vec<Vec<f64>> = pts.iter().map(|&(v, _)| vec![1.0, v]).collect();
    let rhs: Vec<f64> = pts.iter().map(|&(_, a)| (1.0 / a - 1.0).ln()).collect();
    let c = least_squares(&rows, &rhs).ok_or_else(|| Error::FitFailed("logit system is singular".into()))?;
    if !(c[1] > 0.0) {
        return Err(Error::FitFailed("logit slope is not positive".into()));
    }
    let s0 = 1.0 / c[1];
    let x00 = -c[0] * s0;

    let p = levenberg_marquardt(vec![x00, s0], 100, |p| {
        let (x0, s) = (p[0], p[1]);
        if !(s > 0.0) {
            return None;
        }
        let mut r = Vec::with_capacity(pts.len());
        let mut jac = Vec::with_capacity(pts.len());
        for &(v, a) in &pts {
            let f = logistic(x0, s, v);
            // df/dz = -f(1-f) with z = (v - x0)/s
            let dfdz = -f * (1.0 - f);
            r.push(f - a);
            jac.push(vec![-dfdz / s, -dfdz * (v - x0) / (s * s)]);
        }
        Some((r, jac))
    });

    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let model: Vec<f64> = pts.iter().map(|&(v, _)| logistic(p[0], p[1], v)).collect();
    Ok(AlphaFit {
        x0: p[0],
        s: p[1],
        nrmse: nrmse(&ys, &model),
        corr: pearson(&ys, &model),
    })
}
