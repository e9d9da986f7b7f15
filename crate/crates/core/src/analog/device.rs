use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Subthreshold operating point of the kernel and alpha cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// Subthreshold slope factor.
    pub n: f64,
    /// Thermal voltage in volts.
    pub thermal_voltage: f64,
    /// Kernel bias current in amps.
    pub bias_current: f64,
    /// Bias voltage of the operating point in volts (informational).
    pub bias_voltage: f64,
    /// Relative current noise, applied multiplicatively.
    pub noise_sigma: f64,
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self {
            n: 1.5,
            thermal_voltage: 0.025_85,
            bias_current: 10e-9,
            bias_voltage: 0.30,
            noise_sigma: 0.0,
        }
    }
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.n >= 1.0) {
            return Err(Error::InvalidParameter(format!("slope factor n = {} < 1", self.n)));
        }
        if !(self.thermal_voltage > 0.0) {
            return Err(Error::InvalidParameter("thermal voltage must be > 0".into()));
        }
        if !(self.bias_current > 0.0) {
            return Err(Error::InvalidParameter("bias current must be > 0".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidParameter("noise sigma must be >= 0".into()));
        }
        Ok(())
    }

    /// `n * V_T`.
    pub fn slope_voltage(&self) -> f64 {
        self.n * self.thermal_voltage
    }

    /// Width matching the quadratic Taylor term of sech²: `1 / (4 n² V_T²)`.
    pub fn taylor_gamma(&self) -> f64 {
        1.0 / (4.0 * self.slope_voltage().powi(2))
    }

    /// Normalized single-stage transfer `sech²(dv / 2nV_T) / 4`.
    pub fn stage_gain(&self, dv: f64) -> f64 {
        let c = (dv / (2.0 * self.slope_voltage())).cosh();
        0.25 / (c * c)
    }

    /// Alpha-multiplier ratio `1 / (1 + exp(dv / nV_T))`.
    pub fn alpha_ratio(&self, dv: f64) -> f64 {
        1.0 / (1.0 + (dv / self.slope_voltage()).exp())
    }
}

/// One (voltage, response) sample of a DC sweep.
pub type CurvePoint = (f64, f64);

/// Output current of the cascaded differential pair over a sweep of the
/// differential input, `I_in/4 · sech²(dv / 2nV_T)`. Multiplicative
/// Gaussian noise is drawn from `rng` when `noise_sigma > 0`.
pub fn device_curve<R: Rng + ?Sized>(params: &DeviceParams, dv_grid: &[f64], rng: &mut R) -> Vec<CurvePoint> {
    let noise = noise_dist(params.noise_sigma);
    dv_grid
        .iter()
        .map(|&dv| {
            let ideal = params.bias_current * params.stage_gain(dv);
            (dv, ideal * noise_factor(&noise, rng))
        })
        .collect()
}

/// Noiseless alpha-multiplier sweep: output/input current ratio against
/// the control differential.
pub fn alpha_curve(params: &DeviceParams, dv_grid: &[f64]) -> Vec<CurvePoint> {
    dv_grid.iter().map(|&dv| (dv, params.alpha_ratio(dv))).collect()
}

/// Current after `dvs.len()` cascaded kernel stages, each stage fed by the
/// previous stage's output.
pub fn chained_device_current<R: Rng + ?Sized>(params: &DeviceParams, dvs: &[f64], rng: &mut R) -> f64 {
    let noise = noise_dist(params.noise_sigma);
    dvs.iter().fold(params.bias_current, |current, &dv| {
        current * params.stage_gain(dv) * noise_factor(&noise, rng)
    })
}

/// Evenly spaced sweep over `[-half_width, half_width]`.
pub fn symmetric_grid(half_width: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points)
            .map(|i| -half_width + 2.0 * half_width * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

fn noise_dist(sigma: f64) -> Option<Normal<f64>> {
    (sigma > 0.0).then(|| Normal::new(1.0, sigma).expect("sigma checked positive"))
}

fn noise_factor<R: Rng + ?Sized>(noise: &Option<Normal<f64>>, rng: &mut R) -> f64 {
    noise.as_ref().map_or(1.0, |n| n.sample(rng).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn peak_is_quarter_bias_current() {
        let p = DeviceParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = device_curve(&p, &[0.0], &mut rng);
        assert_eq!(c[0].1, p.bias_current / 4.0);
    }

    #[test]
    fn sech_squared_at_one() {
        let p = DeviceParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dv = 2.0 * p.n * p.thermal_voltage;
        let c = device_curve(&p, &[dv], &mut rng);
        // sech²(1) = 1 / cosh²(1)
        let expected = 0.419_974_341_614_026_1 * p.bias_current / 4.0;
        assert!((c[0].1 - expected).abs() / expected < 1e-14);
    }

    #[test]
    fn tails_decay_monotonically() {
        let p = DeviceParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let grid: Vec<f64> = (0..50).map(|i| i as f64 * 0.02).collect();
        let c = device_curve(&p, &grid, &mut rng);
        assert!(c.windows(2).all(|w| w[1].1 < w[0].1));
        assert!(c.last().unwrap().1 < 1e-6 * c[0].1);
        let neg: Vec<f64> = grid.iter().map(|v| -v).collect();
        let cn = device_curve(&p, &neg, &mut rng);
        assert!(cn.iter().zip(&c).all(|(a, b)| a.1 == b.1));
    }

    #[test]
    fn taylor_gamma_value() {
        let g = DeviceParams::default().taylor_gamma();
        assert!((g - 166.278_613_951_357_7).abs() < 1e-9);
    }

    #[test]
    fn noise_is_seeded() {
        let p = DeviceParams {
            noise_sigma: 0.05,
            ..Default::default()
        };
        let grid = symmetric_grid(0.1, 11);
        let a = device_curve(&p, &grid, &mut ChaCha8Rng::seed_from_u64(3));
        let b = device_curve(&p, &grid, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert!(a.iter().any(|&(v, i)| (i - p.bias_current * p.stage_gain(v)).abs() > 0.0));
    }

    #[test]
    fn chained_stages_multiply() {
        let p = DeviceParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let i = chained_device_current(&p, &[0.01, -0.02, 0.0], &mut rng);
        let expected = p.bias_current * p.stage_gain(0.01) * p.stage_gain(-0.02) * 0.25;
        assert!((i - expected).abs() / expected < 1e-14);
    }

    #[test]
    fn invalid_params() {
        assert!(DeviceParams {
            n: 0.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(DeviceParams {
            thermal_voltage: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(DeviceParams {
            bias_current: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
