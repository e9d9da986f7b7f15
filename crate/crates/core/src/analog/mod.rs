//! Behavioral model of the subthreshold analog RBF classifier.
//!
//! The kernel cell is a cascaded differential pair whose output current
//! follows `I_in/4 · sech²(Δv / 2nV_T)`. A Gaussian fitted to that curve
//! stands in for the cell; stages chain across input dimensions so their
//! factors multiply. Support-vector weights are set by a logistic alpha
//! multiplier, and a comparator reads the sign of the signed rail sum.

mod classifier;
mod device;
mod fit;

pub use classifier::{build_analog, within_validity_window, AnalogRbfClassifier, VoltageMap, ALPHA_EPS, MAX_ANALOG_DIMS};
pub use device::{alpha_curve, chained_device_current, device_curve, symmetric_grid, CurvePoint, DeviceParams};
pub use fit::{alpha_control, fit_alpha, fit_gaussian, nrmse, pearson, AlphaFit, GaussianFit};

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Calibration of the kernel and alpha cells from synthetic sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub device: DeviceParams,
    pub kernel: GaussianFit,
    pub alpha: AlphaFit,
}

/// Sweep settings for the validation and calibration runs. Half-widths are
/// in multiples of `n V_T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub kernel_half_width: f64,
    pub kernel_points: usize,
    pub alpha_half_width: f64,
    pub alpha_points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            kernel_half_width: 4.0,
            kernel_points: 201,
            alpha_half_width: 6.0,
            alpha_points: 121,
        }
    }
}

/// Sweeps both cells and fits their ideal models.
pub fn calibrate_device<R: Rng + ?Sized>(device: &DeviceParams, sweep: &SweepConfig, rng: &mut R) -> Result<Calibration> {
    device.validate()?;
    let nvt = device.slope_voltage();
    let kgrid = symmetric_grid(sweep.kernel_half_width * nvt, sweep.kernel_points);
    let kernel = fit_gaussian(&device_curve(device, &kgrid, rng))?;
    let agrid = symmetric_grid(sweep.alpha_half_width * nvt, sweep.alpha_points);
    let alpha = fit_alpha(&alpha_curve(device, &agrid))?;
    Ok(Calibration {
        device: *device,
        kernel,
        alpha,
    })
}

/// Settings of the validation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub device: DeviceParams,
    pub sweep: SweepConfig,
    /// Dimension count of the chained-product check.
    pub dims: usize,
    /// Random input points of the product check.
    pub product_samples: usize,
    pub seed: u64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            device: DeviceParams::default(),
            sweep: SweepConfig::default(),
            dims: 3,
            product_samples: 2000,
            seed: 0,
        }
    }
}

/// One fidelity metric row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityRow {
    pub name: String,
    pub nrmse: f64,
    pub corr: f64,
}

/// Device-vs-ideal fidelity table plus the curves behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub config: ValidationConfig,
    pub calibration: Calibration,
    /// Width given by matching quadratic Taylor terms, `1/(4 n² V_T²)`.
    pub taylor_gamma: f64,
    pub rows: Vec<FidelityRow>,
    /// `(Δv, device current, fitted current)`.
    #[serde(skip)]
    pub kernel_curve: Vec<(f64, f64, f64)>,
    /// `(Δv, device ratio, fitted ratio)`.
    #[serde(skip)]
    pub alpha_curve: Vec<(f64, f64, f64)>,
}

impl ValidationReport {
    pub fn row(&self, name: &str) -> Option<&FidelityRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Plain-text metric table.
    pub fn table(&self) -> String {
        let mut s = format!("{:<28} {:>10} {:>10}\n", "metric", "nrmse", "corr");
        for r in &self.rows {
            s.push_str(&format!("{:<28} {:>10.4} {:>10.4}\n", r.name, r.nrmse, r.corr));
        }
        s
    }

    pub fn write_kernel_csv(&self, path: &Path) -> Result<()> {
        write_curve_csv(path, ["dv_volts", "device_amps", "fit_amps"], &self.kernel_curve)
    }

    pub fn write_alpha_csv(&self, path: &Path) -> Result<()> {
        write_curve_csv(path, ["dv_volts", "device_ratio", "fit_ratio"], &self.alpha_curve)
    }
}

fn write_curve_csv(path: &Path, header: [&str; 3], rows: &[(f64, f64, f64)]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(header)?;
    for (a, b, c) in rows {
        w.write_record([a.to_string(), b.to_string(), c.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub const ROW_KERNEL: &str = "kernel";
pub const ROW_ALPHA: &str = "alpha multiplier";
pub const ROW_GAUSSIAN_SELF_TEST: &str = "exact gaussian self-test";

/// Name of the chained-product row for `dims` stages.
pub fn product_row_name(dims: usize) -> String {
    format!("product across dims (D={dims})")
}

/// Runs the fidelity suite: single-stage kernel fit, chained product over
/// `dims` stages at random inputs, alpha-multiplier fit, and a fit of exact
/// Gaussian samples.
pub fn validate_analog(cfg: &ValidationConfig) -> Result<ValidationReport> {
    if cfg.dims == 0 || cfg.dims > MAX_ANALOG_DIMS {
        return Err(Error::InvalidParameter(format!(
            "dims must be in 1..={MAX_ANALOG_DIMS}, got {}",
            cfg.dims
        )));
    }
    if cfg.product_samples < 2 {
        return Err(Error::InvalidParameter("product check needs at least 2 samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let device = cfg.device;
    device.validate()?;
    let nvt = device.slope_voltage();

    let kgrid = symmetric_grid(cfg.sweep.kernel_half_width * nvt, cfg.sweep.kernel_points);
    let kcurve = device_curve(&device, &kgrid, &mut rng);
    let kernel = fit_gaussian(&kcurve)?;
    let agrid = symmetric_grid(cfg.sweep.alpha_half_width * nvt, cfg.sweep.alpha_points);
    let acurve = alpha_curve(&device, &agrid);
    let alpha = fit_alpha(&acurve)?;

    // Chained device stages against the product of fitted per-stage
    // Gaussians, over inputs drawn uniformly in the swept cube.
    let half = cfg.sweep.kernel_half_width * nvt;
    let stage_gain = kernel.a0 / device.bias_current;
    let mut measured = Vec::with_capacity(cfg.product_samples);
    let mut ideal = Vec::with_capacity(cfg.product_samples);
    for _ in 0..cfg.product_samples {
        let dvs: Vec<f64> = (0..cfg.dims).map(|_| rng.random_range(-half..=half)).collect();
        measured.push(chained_device_current(&device, &dvs, &mut rng));
        ideal.push(dvs.iter().fold(device.bias_current, |i, &v| {
            i * stage_gain * (-kernel.gamma0 * (v - kernel.mu).powi(2)).exp()
        }));
    }

    let truth = GaussianFit {
        a0: device.bias_current / 4.0,
        gamma0: device.taylor_gamma(),
        mu: 0.0,
        nrmse: 0.0,
        corr: 1.0,
    };
    let exact: Vec<CurvePoint> = kgrid.iter().map(|&v| (v, truth.eval(v))).collect();
    let self_fit = fit_gaussian(&exact)?;

    let rows = vec![
        FidelityRow {
            name: ROW_KERNEL.into(),
            nrmse: kernel.nrmse,
            corr: kernel.corr,
        },
        FidelityRow {
            name: product_row_name(cfg.dims),
            nrmse: nrmse(&measured, &ideal),
            corr: pearson(&measured, &ideal),
        },
        FidelityRow {
            name: ROW_ALPHA.into(),
            nrmse: alpha.nrmse,
            corr: alpha.corr,
        },
        FidelityRow {
            name: ROW_GAUSSIAN_SELF_TEST.into(),
            nrmse: self_fit.nrmse,
            corr: self_fit.corr,
        },
    ];

    Ok(ValidationReport {
        config: *cfg,
        calibration: Calibration { device, kernel, alpha },
        taylor_gamma: device.taylor_gamma(),
        rows,
        kernel_curve: kcurve.iter().map(|&(v, i)| (v, i, kernel.eval(v))).collect(),
        alpha_curve: acurve.iter().map(|&(v, a)| (v, a, alpha.eval(v))).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_validation_regime() {
        let r = validate_analog(&ValidationConfig::default()).unwrap();
        let k = r.row(ROW_KERNEL).unwrap();
        assert!(k.nrmse <= 0.03 && k.corr >= 0.99, "{k:?}");
        let p = r.row(&product_row_name(3)).unwrap();
        assert!(p.nrmse <= 0.02, "{p:?}");
        let a = r.row(ROW_ALPHA).unwrap();
        assert!(a.nrmse <= 0.001, "{a:?}");
        assert!(r.row(ROW_GAUSSIAN_SELF_TEST).unwrap().nrmse <= 1e-10);
        assert_eq!(r.kernel_curve.len(), 201);
    }

    #[test]
    fn validation_is_deterministic() {
        let cfg = ValidationConfig {
            device: DeviceParams {
                noise_sigma: 0.02,
                ..Default::default()
            },
            ..Default::default()
        };
        let a = validate_analog(&cfg).unwrap().to_json().unwrap();
        let b = validate_analog(&cfg).unwrap().to_json().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_dims() {
        let cfg = ValidationConfig {
            dims: 6,
            ..Default::default()
        };
        assert!(validate_analog(&cfg).is_err());
    }

    #[test]
    fn curve_csv_round_trip() {
        let r = validate_analog(&ValidationConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("kernel.csv");
        r.write_kernel_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("dv_volts,device_amps,fit_amps"));
        assert_eq!(text.lines().count(), 202);
    }
}
