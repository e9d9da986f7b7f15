//! Shared test helpers: random small SVM duals and an independent
//! projected-gradient solver for them.

use flexsvm::Kernel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Problem {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<i8>,
    pub kernel: Kernel,
    pub c: f64,
}

pub fn random_problem(rng: &mut ChaCha8Rng) -> Problem {
    let m = rng.random_range(4..=12);
    let d = rng.random_range(1..=2);
    let x: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
    let mut y: Vec<i8> = (0..m).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
    y[0] = 1;
    y[1] = -1;
    let kernel = if rng.random_bool(0.5) {
        Kernel::Linear
    } else {
        Kernel::Rbf {
            gamma: rng.random_range(0.5..8.0),
        }
    };
    let c = [0.1, 1.0, 10.0][rng.random_range(0..3)];
    Problem { x, y, kernel, c }
}

fn gram(p: &Problem) -> Vec<Vec<f64>> {
    p.x.iter()
        .map(|a| {
            p.x.iter()
                .map(|b| match p.kernel {
                    Kernel::Linear => a.iter().zip(b).map(|(u, v)| u * v).sum(),
                    Kernel::Rbf { gamma } => (-gamma * a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>()).exp(),
                })
                .collect()
        })
        .collect()
}

fn objective(q: &[Vec<f64>], a: &[f64]) -> f64 {
    let mut quad = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            quad += a[i] * a[j] * q[i][j];
        }
    }
    a.iter().sum::<f64>() - 0.5 * quad
}

/// Euclidean projection onto `{0 <= a <= c, yᵀa = 0}`: `a = clip(v - t·y)`
/// for the `t` that zeroes `yᵀa`, found by bisection.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |t: f64| -> Vec<f64> { v.iter().zip(y).map(|(vi, yi)| (vi - t * yi).clamp(0.0, c)).collect() };
    let g = |t: f64| at(t).iter().zip(y).map(|(a, yi)| a * yi).sum::<f64>();
    let span = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        // g is non-increasing in t.
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Accelerated projected gradient ascent on the dual.
pub fn oracle(p: &Problem) -> f64 {
    let k = gram(p);
    let y: Vec<f64> = p.y.iter().map(|&v| f64::from(v)).collect();
    let n = y.len();
    let q: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| y[i] * y[j] * k[i][j]).collect()).collect();
    // Frobenius norm bounds the largest eigenvalue.
    let lipschitz = q.iter().flatten().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    let step = 1.0 / lipschitz;
    let mut a = vec![0.0; n];
    let mut best = objective(&q, &a);
    let mut z = a.clone();
    let mut t = 1.0f64;
    let mut checkpoint = best;
    for iter in 0..200_000 {
        if iter % 2000 == 1999 {
            if best - checkpoint < 1e-12 {
                break;
            }
            checkpoint = best;
        }
        let grad: Vec<f64> = (0..n).map(|i| 1.0 - (0..n).map(|j| q[i][j] * z[j]).sum::<f64>()).collect();
        let next = project(&z.iter().zip(&grad).map(|(zi, gi)| zi + step * gi).collect::<Vec<_>>(), &y, p.c);
        let value = objective(&q, &next);
        if value < best {
            // Momentum overshot: restart from the last iterate.
            z = a.clone();
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = next.iter().zip(&a).map(|(nx, ax)| nx + (t - 1.0) / t_next * (nx - ax)).collect();
        a = next;
        best = value;
        t = t_next;
    }
    objective(&q, &a)
}

/// `n` random problems from a fixed seed.
pub fn problems(seed: u64, n: usize) -> Vec<Problem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_problem(&mut rng)).collect()
}
