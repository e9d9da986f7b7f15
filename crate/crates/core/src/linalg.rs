//! Small dense solvers for the curve fits and cost calibration. Problem
//! sizes here are a handful of columns, so plain `Vec<Vec<f64>>` is enough.

#![allow(clippy::needless_range_loop)]

/// Least-squares solution of `A x ≈ b` via Householder QR with column
/// equilibration. `a` is row-major, `m x n` with `m >= n`. Returns `None`
/// when `A` is numerically rank deficient.
pub(crate) fn least_squares(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let m = a.len();
    let n = a.first()?.len();
    if m < n || b.len() != m {
        return None;
    }
    let scale: Vec<f64> = (0..n)
        .map(|j| {
            let norm = a.iter().map(|r| r[j] * r[j]).sum::<f64>().sqrt();
            if norm > 0.0 {
                norm
            } else {
                1.0
            }
        })
        .collect();
    let mut r: Vec<Vec<f64>> = a.iter().map(|row| row.iter().zip(&scale).map(|(v, s)| v / s).collect()).collect();
    let mut qtb = b.to_vec();

    for k in 0..n {
        let norm = (k..m).map(|i| r[i][k] * r[i][k]).sum::<f64>().sqrt();
        if norm < 1e-13 {
            return None;
        }
        let alpha = if r[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| r[i][k]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k..n {
            let dotp: f64 = (k..m).map(|i| v[i - k] * r[i][j]).sum();
            let f = 2.0 * dotp / vnorm2;
            for i in k..m {
                r[i][j] -= f * v[i - k];
            }
        }
        let dotp: f64 = (k..m).map(|i| v[i - k] * qtb[i]).sum();
        let f = 2.0 * dotp / vnorm2;
        for i in k..m {
            qtb[i] -= f * v[i - k];
        }
    }

    let diag_max = (0..n).map(|k| r[k][k].abs()).fold(0.0, f64::max);
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        if r[k][k].abs() <= 1e-12 * diag_max {
            return None;
        }
        let s: f64 = ((k + 1)..n).map(|j| r[k][j] * x[j]).sum();
        x[k] = (qtb[k] - s) / r[k][k];
    }
    Some(x.iter().zip(&scale).map(|(v, s)| v / s).collect())
}

/// Solves a square system with partial pivoting.
pub(crate) fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[p][k].abs() < 1e-300 {
            return None;
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in (k + 1)..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = ((k + 1)..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_system() {
        let a = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let x = solve_square(a.clone(), vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12 && (x[1] - 1.4).abs() < 1e-12);
        let y = least_squares(&a, &[3.0, 5.0]).unwrap();
        assert!((y[0] - 0.8).abs() < 1e-12 && (y[1] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn line_fit() {
        // y = 1 + 2t sampled without noise.
        let a: Vec<Vec<f64>> = (0..6).map(|t| vec![1.0, t as f64]).collect();
        let b: Vec<f64> = (0..6).map(|t| 1.0 + 2.0 * t as f64).collect();
        let x = least_squares(&a, &b).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]];
        assert!(least_squares(&a, &[1.0, 2.0, 3.0]).is_none());
    }
}
