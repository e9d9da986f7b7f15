use serde::{Deserialize, Serialize};

use super::{Block, BlockCost, CostCoefficients, SystemDescriptor};
use crate::error::{Error, Result};
use crate::linalg::least_squares;

/// A design with known totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub name: String,
    pub descriptor: SystemDescriptor,
    /// mm²
    pub area: f64,
    /// mW
    pub power: f64,
}

/// Fitted vs. reference totals of one reference point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub name: String,
    pub area_target: f64,
    pub area_fit: f64,
    pub power_target: f64,
    pub power_fit: f64,
}

impl Residual {
    /// `(fit - target) / target`.
    pub fn area_rel_error(&self) -> f64 {
        rel(self.area_fit, self.area_target)
    }

    pub fn power_rel_error(&self) -> f64 {
        rel(self.power_fit, self.power_target)
    }
}

fn rel(fit: f64, target: f64) -> f64 {
    if target != 0.0 {
        (fit - target) / target
    } else {
        fit
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFit {
    pub coefficients: CostCoefficients,
    pub residuals: Vec<Residual>,
    pub free_blocks: Vec<Block>,
    /// Whether a small ridge term was added because the references did not
    /// determine every free coefficient.
    pub regularized: bool,
}

impl CalibrationFit {
    /// Largest `|relative error|` over areas and powers.
    pub fn max_rel_error(&self) -> f64 {
        self.residuals
            .iter()
            .flat_map(|r| [r.area_rel_error().abs(), r.power_rel_error().abs()])
            .fold(0.0, f64::max)
    }
}

/// Nonnegative least squares `min ‖Ax - b‖, x >= 0` by the Lawson-Hanson
/// active-set method. `a` is row-major.
pub fn nnls(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let m = a.len();
    let n = a.first().map_or(0, Vec::len);
    let mut x = vec![0.0; n];
    if m == 0 || n == 0 {
        return x;
    }
    let norm_a = a.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    let tol = 10.0 * f64::EPSILON * norm_a * m.max(n) as f64 * b.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let mut passive = vec![false; n];
    let mut banned = vec![false; n];

    let gradient = |x: &[f64]| -> Vec<f64> {
        let r: Vec<f64> = (0..m).map(|i| b[i] - (0..n).map(|j| a[i][j] * x[j]).sum::<f64>()).collect();
        (0..n).map(|j| (0..m).map(|i| a[i][j] * r[i]).sum()).collect()
    };
    let solve_passive = |passive: &[bool]| -> Option<Vec<f64>> {
        let cols: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub: Vec<Vec<f64>> = a.iter().map(|row| cols.iter().map(|&j| row[j]).collect()).collect();
        let z = least_squares(&sub, b)?;
        let mut full = vec![0.0; n];
        for (&j, v) in cols.iter().zip(z) {
            full[j] = v;
        }
        Some(full)
    };

    for _outer in 0..3 * n + 10 {
        let w = gradient(&x);
        let Some(t) = (0..n)
            .filter(|&j| !passive[j] && !banned[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]))
        else {
            break;
        };
        passive[t] = true;
        for _inner in 0..3 * n + 10 {
            let Some(z) = solve_passive(&passive) else {
                // Column t is dependent on the passive set.
                passive[t] = false;
                banned[t] = true;
                break;
            };
            if (0..n).filter(|&j| passive[j]).all(|j| z[j] > 0.0) {
                x = z;
                break;
            }
            let mut step = 1.0f64;
            for j in (0..n).filter(|&j| passive[j] && z[j] <= 0.0) {
                let denom = x[j] - z[j];
                if denom > 0.0 {
                    step = step.min(x[j] / denom);
                }
            }
            for j in 0..n {
                if passive[j] {
                    x[j] += step * (z[j] - x[j]);
                    if x[j] <= tol {
                        x[j] = 0.0;
                        passive[j] = false;
                    }
                }
            }
        }
    }
    x
}

/// Fits the `free` block coefficients to the reference totals by
/// nonnegative least squares on relative residuals; area and power are
/// fitted independently. Blocks outside `free` keep their value from
/// `base`, as does the cheap-weight discount. Exact duplicate references
/// are dropped first. When the references leave some free coefficient
/// undetermined, a small ridge term picks the minimum-norm solution.
pub fn calibrate(references: &[ReferencePoint], base: &CostCoefficients, free: &[Block]) -> Result<CalibrationFit> {
    base.validate()?;
    if references.is_empty() {
        return Err(Error::InfeasibleCalibration("no reference points".into()));
    }
    if let Some(r) = references.iter().find(|r| !(r.area >= 0.0 && r.power >= 0.0)) {
        return Err(Error::InfeasibleCalibration(format!(
            "reference {} has a negative or undefined target",
            r.name
        )));
    }
    let mut unique: Vec<&ReferencePoint> = Vec::new();
    for r in references {
        if !unique
            .iter()
            .any(|u| u.descriptor == r.descriptor && u.area == r.area && u.power == r.power)
        {
            unique.push(r);
        }
    }
    let mut free: Vec<Block> = free.to_vec();
    free.sort();
    free.dedup();

    let discount = base.cheap_weight_discount;
    let counts: Vec<[f64; 9]> = unique.iter().map(|r| r.descriptor.block_counts(discount)).collect();
    let col = |b: Block| Block::ALL.iter().position(|&x| x == b).unwrap();
    let fixed_cost = |c: &[f64; 9]| -> Result<BlockCost> {
        let mut total = BlockCost::default();
        for b in Block::ALL.into_iter().filter(|b| !free.contains(b)) {
            if c[col(b)] != 0.0 {
                total += base.get(b)?.scaled(c[col(b)]);
            }
        }
        Ok(total)
    };
    // Only blocks that occur in some reference can be identified.
    let active: Vec<Block> = free.iter().copied().filter(|&b| counts.iter().any(|c| c[col(b)] != 0.0)).collect();
    let regularized = unique.len() < active.len();

    let mut blocks = base.blocks.clone();
    for &b in &free {
        blocks.insert(b, BlockCost::default());
    }
    for power in [false, true] {
        let target = |r: &ReferencePoint| if power { r.power } else { r.area };
        let mean_target = unique.iter().map(|r| target(r)).sum::<f64>() / unique.len() as f64;
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for (r, c) in unique.iter().zip(&counts) {
            let fixed = fixed_cost(c)?;
            let t = target(r);
            let weight = 1.0 / if t > 0.0 { t } else { mean_target.max(f64::MIN_POSITIVE) };
            rows.push(active.iter().map(|&b| c[col(b)] * weight).collect::<Vec<f64>>());
            rhs.push((t - if power { fixed.power } else { fixed.area }) * weight);
        }
        // Column equilibration keeps blocks with very different counts on
        // a common scale; the scales are positive, so signs are unchanged.
        let scales: Vec<f64> = (0..active.len())
            .map(|j| {
                let s = rows.iter().map(|r: &Vec<f64>| r[j] * r[j]).sum::<f64>().sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        for row in rows.iter_mut() {
            for (v, s) in row.iter_mut().zip(&scales) {
                *v /= s;
            }
        }
        if regularized {
            let lambda = 1e-6f64.sqrt();
            for j in 0..active.len() {
                let mut row = vec![0.0; active.len()];
                row[j] = lambda;
                rows.push(row);
                rhs.push(0.0);
            }
        }
        let x = nnls(&rows, &rhs);
        for ((&b, v), s) in active.iter().zip(x).zip(&scales) {
            let entry = blocks.entry(b).or_default();
            if power {
                entry.power = v / s;
            } else {
                entry.area = v / s;
            }
        }
    }

    let coefficients = CostCoefficients {
        cheap_weight_discount: discount,
        blocks,
    };
    let residuals = references
        .iter()
        .map(|r| {
            let fit = super::estimate_descriptor(&r.descriptor, &coefficients)?;
            Ok(Residual {
                name: r.name.clone(),
                area_target: r.area,
                area_fit: fit.total.area,
                power_target: r.power,
                power_fit: fit.total.power,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CalibrationFit {
        coefficients,
        residuals,
        free_blocks: free,
        regularized,
    })
}
