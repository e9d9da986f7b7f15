use rand::Rng;
use serde::{Deserialize, Serialize};

use super::device::{chained_device_current, DeviceParams};
use super::fit::{alpha_control, AlphaFit, GaussianFit};
use crate::error::{Error, Result};
use crate::svm::{decision_bit, BinarySvm, Kernel};

/// Largest input dimension the analog kernel chain supports.
pub const MAX_ANALOG_DIMS: usize = 5;

/// Clamp margin for normalized alpha ratios.
pub const ALPHA_EPS: f64 = 1e-4;

/// Affine map from a normalized feature in `[0, 1]` to an input voltage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageMap {
    /// Voltage of feature value 0.
    pub offset: f64,
    /// Volts per unit feature.
    pub span: f64,
}

impl VoltageMap {
    /// Maps `[0, 1]` onto a window of `2 n V_T`.
    pub fn for_device(params: &DeviceParams) -> Self {
        Self {
            offset: 0.0,
            span: 2.0 * params.slope_voltage(),
        }
    }

    pub fn to_voltage(&self, x: f64) -> f64 {
        self.offset + self.span * x
    }

    pub fn map(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.to_voltage(v)).collect()
    }
}

impl Default for VoltageMap {
    fn default() -> Self {
        Self::for_device(&DeviceParams::default())
    }
}

/// Behavioral model of one analog RBF binary classifier: a bank of
/// per-support-vector kernel chains, each scaled by an alpha multiplier and
/// steered onto the positive or negative rail, plus a bias current source
/// and a comparator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogRbfClassifier {
    pub fit: GaussianFit,
    pub alpha_fit: AlphaFit,
    /// Trained kernel width converted to 1/V².
    pub gamma_target: f64,
    /// Input scaling that maps the fitted width onto `gamma_target`.
    pub s_gamma: f64,
    pub sv_voltages: Vec<Vec<f64>>,
    /// Control voltage of each alpha multiplier.
    pub alpha_controls: Vec<f64>,
    pub signs: Vec<i8>,
    /// Signed constant current realizing the bias, in amps.
    pub bias_current: f64,
    /// Kernel bias current `I_in`, in amps.
    pub input_current: f64,
    pub vmap: VoltageMap,
    pub class_pair: (usize, usize),
    /// Upper bound on `|f(x) - C · rail(x) / unit|` from alpha clamping, in
    /// decision-value units. Points whose float decision magnitude exceeds
    /// it keep their sign.
    pub margin: f64,
    /// Largest scaled stage input `s_gamma · span`, in volts.
    pub max_stage_input: f64,
}

impl AnalogRbfClassifier {
    pub fn dims(&self) -> usize {
        self.sv_voltages.first().map_or(0, Vec::len)
    }

    pub fn num_support_vectors(&self) -> usize {
        self.sv_voltages.len()
    }

    /// Peak response of one kernel chain: `I_in / 4^D`.
    pub fn peak_current(&self) -> f64 {
        self.input_current / 4f64.powi(self.dims() as i32)
    }

    /// Alpha ratio realized by multiplier `j` through the fitted logistic.
    pub fn alpha(&self, j: usize) -> f64 {
        self.alpha_fit.eval(self.alpha_controls[j])
    }

    fn check_arity(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Closed-form chain output `I_in/4^D · exp(-gamma0 Σ (s Δv_d)²)`.
    pub fn kernel_response(&self, sv_index: usize, x_voltages: &[f64]) -> Result<f64> {
        self.check_sv(sv_index)?;
        self.check_arity(x_voltages)?;
        let q: f64 = self.sv_voltages[sv_index]
            .iter()
            .zip(x_voltages)
            .map(|(s, x)| (self.s_gamma * (x - s)).powi(2))
            .sum();
        Ok(self.peak_current() * (-self.fit.gamma0 * q).exp())
    }

    /// Same response evaluated stage by stage, each stage scaling the
    /// previous stage's output current.
    pub fn kernel_response_chained(&self, sv_index: usize, x_voltages: &[f64]) -> Result<f64> {
        self.check_sv(sv_index)?;
        self.check_arity(x_voltages)?;
        Ok(self.sv_voltages[sv_index]
            .iter()
            .zip(x_voltages)
            .fold(self.input_current, |i, (s, x)| {
                i * 0.25 * (-self.fit.gamma0 * (self.s_gamma * (x - s)).powi(2)).exp()
            }))
    }

    fn check_sv(&self, sv_index: usize) -> Result<()> {
        if sv_index >= self.num_support_vectors() {
            return Err(Error::InvalidParameter(format!(
                "support vector index {sv_index} out of range ({} stored)",
                self.num_support_vectors()
            )));
        }
        Ok(())
    }

    /// `I+ - I- + I_bias` in amps.
    pub fn rail_difference(&self, x_voltages: &[f64]) -> Result<f64> {
        self.check_arity(x_voltages)?;
        let mut plus = 0.0;
        let mut minus = 0.0;
        for j in 0..self.num_support_vectors() {
            let i = self.alpha(j) * self.kernel_response(j, x_voltages)?;
            if self.signs[j] > 0 {
                plus += i;
            } else {
                minus += i;
            }
        }
        Ok(plus - minus + self.bias_current)
    }

    /// Comparator output: 1 iff the rail difference is positive.
    pub fn classify(&self, x_voltages: &[f64]) -> Result<u8> {
        Ok(decision_bit(self.rail_difference(x_voltages)?))
    }

    /// Classifies a normalized feature vector through the voltage map.
    pub fn classify_features(&self, x: &[f64]) -> Result<u8> {
        self.classify(&self.vmap.map(x))
    }

    /// Rail difference expressed in decision-value units, comparable to the
    /// float model's `f(x)`.
    pub fn equivalent_decision_value(&self, x: &[f64], c: f64) -> Result<f64> {
        Ok(self.rail_difference(&self.vmap.map(x))? * c / self.peak_current())
    }

    /// Evaluates the kernels on the sech² device law instead of the fitted
    /// Gaussian, with the device's current noise. Stage inputs are offset by
    /// the fitted center so the device peak lines up with the model's.
    pub fn classify_on_device<R: Rng + ?Sized>(&self, device: &DeviceParams, x_voltages: &[f64], rng: &mut R) -> Result<u8> {
        self.check_arity(x_voltages)?;
        let dev = DeviceParams {
            bias_current: self.input_current,
            ..*device
        };
        let mut diff = self.bias_current;
        for (j, sv) in self.sv_voltages.iter().enumerate() {
            let dvs: Vec<f64> = sv
                .iter()
                .zip(x_voltages)
                .map(|(s, x)| self.s_gamma * (x - s) + self.fit.mu)
                .collect();
            let i = self.alpha(j) * chained_device_current(&dev, &dvs, rng);
            diff += f64::from(self.signs[j]) * i;
        }
        Ok(decision_bit(diff))
    }
}

/// Realizes a trained RBF model as an analog classifier.
///
/// Dual coefficients are divided by `C` and clamped into
/// `(ALPHA_EPS, 1 - ALPHA_EPS)`; the bias current is scaled by the same
/// `1/C` so the comparator sees `f(x) / C` in units of the chain peak.
pub fn build_analog(
    model: &BinarySvm,
    fit: &GaussianFit,
    alpha_fit: &AlphaFit,
    vmap: &VoltageMap,
    input_current: f64,
) -> Result<AnalogRbfClassifier> {
    let Kernel::Rbf { gamma } = model.kernel else {
        return Err(Error::WrongKernel {
            expected: "rbf",
            found: model.kernel.name(),
        });
    };
    let d = model.dims();
    if d > MAX_ANALOG_DIMS {
        return Err(Error::AnalogCapacityExceeded {
            max: MAX_ANALOG_DIMS,
            found: d,
        });
    }
    if model.dual_coeffs.is_empty() || model.dual_coeffs.iter().all(|&a| a <= 0.0) {
        return Err(Error::DegenerateAlphas);
    }
    if !(vmap.span > 0.0) {
        return Err(Error::InvalidParameter("voltage map span must be > 0".into()));
    }
    if !(fit.gamma0 > 0.0) {
        return Err(Error::InvalidParameter("fitted gamma0 must be > 0".into()));
    }
    if !(input_current > 0.0) {
        return Err(Error::InvalidParameter("input current must be > 0".into()));
    }

    let gamma_target = gamma / (vmap.span * vmap.span);
    let s_gamma = (gamma_target / fit.gamma0).sqrt();
    let mut alpha_controls = Vec::with_capacity(model.dual_coeffs.len());
    let mut margin = 0.0;
    for &a in &model.dual_coeffs {
        let ratio = (a / model.c).clamp(ALPHA_EPS, 1.0 - ALPHA_EPS);
        let v = alpha_control(alpha_fit, ratio)?;
        let realized = alpha_fit.eval(v);
        margin += (realized * model.c - a).abs();
        alpha_controls.push(v);
    }
    let peak = input_current / 4f64.powi(d as i32);
    let max_stage_input = s_gamma * vmap.span;

    let clf = AnalogRbfClassifier {
        fit: *fit,
        alpha_fit: *alpha_fit,
        gamma_target,
        s_gamma,
        sv_voltages: model.support_vectors.iter().map(|sv| vmap.map(sv)).collect(),
        alpha_controls,
        signs: model.labels.clone(),
        bias_current: model.bias / model.c * peak,
        input_current,
        vmap: *vmap,
        class_pair: model.class_pair,
        margin,
        max_stage_input,
    };
    Ok(clf)
}

/// Whether the scaled stage inputs stay within `half_width` volts for
/// every feature difference in `[-1, 1]`.
pub fn within_validity_window(clf: &AnalogRbfClassifier, half_width: f64) -> bool {
    clf.max_stage_input <= half_width
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svm::{train_binary, TrainConfig};

    fn ideal_fit(gamma0: f64) -> GaussianFit {
        GaussianFit {
            a0: 2.5e-9,
            gamma0,
            mu: 0.0,
            nrmse: 0.0,
            corr: 1.0,
        }
    }

    fn alpha_fit() -> AlphaFit {
        AlphaFit {
            x0: 0.0,
            s: 1.5 * 0.025_85,
            nrmse: 0.0,
            corr: 1.0,
        }
    }

    fn toy_model(gamma: f64) -> BinarySvm {
        let x = vec![
            vec![0.1, 0.2],
            vec![0.3, 0.1],
            vec![0.8, 0.9],
            vec![0.7, 0.6],
            vec![0.2, 0.8],
            vec![0.9, 0.2],
        ];
        let y = [-1, -1, 1, 1, -1, 1];
        train_binary(&x, &y, Kernel::rbf(gamma).unwrap(), &TrainConfig::default(), (0, 1)).unwrap()
    }

    fn vmap() -> VoltageMap {
        VoltageMap { offset: 0.0, span: 0.1 }
    }

    #[test]
    fn scaling_identity_and_square_root() {
        let fit = ideal_fit(150.0);
        // gamma_target = gamma / span² = gamma0 when gamma = gamma0 span².
        let m = toy_model(150.0 * 0.01);
        let c = build_analog(&m, &fit, &alpha_fit(), &vmap(), 1e-8).unwrap();
        assert!((c.s_gamma - 1.0).abs() < 1e-12);
        let m = toy_model(4.0 * 150.0 * 0.01);
        let c = build_analog(&m, &fit, &alpha_fit(), &vmap(), 1e-8).unwrap();
        assert!((c.s_gamma - 2.0).abs() < 1e-12);
        assert!((c.s_gamma - (c.gamma_target / fit.gamma0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn peak_at_support_vector() {
        let c = build_analog(&toy_model(2.0), &ideal_fit(140.0), &alpha_fit(), &vmap(), 1e-8).unwrap();
        for (j, sv) in c.sv_voltages.iter().enumerate() {
            let r = c.kernel_response(j, sv).unwrap();
            assert!((r - 1e-8 / 16.0).abs() <= 1e-12 * 1e-8 / 16.0);
        }
    }

    #[test]
    fn two_dim_expansion() {
        let c = build_analog(&toy_model(2.0), &ideal_fit(140.0), &alpha_fit(), &vmap(), 1e-8).unwrap();
        let sv = c.sv_voltages[0].clone();
        let v = 0.013;
        let x = vec![sv[0] + v, sv[1]];
        let expected = 1e-8 / 16.0 * (-140.0 * (c.s_gamma * v).powi(2)).exp();
        let r = c.kernel_response(0, &x).unwrap();
        assert!((r - expected).abs() / expected < 1e-12);
        let chained = c.kernel_response_chained(0, &x).unwrap();
        assert!((chained - r).abs() / r < 1e-12);
    }

    #[test]
    fn agrees_with_float_model() {
        let m = toy_model(3.0);
        let c = build_analog(&m, &ideal_fit(133.0), &alpha_fit(), &vmap(), 1e-8).unwrap();
        for i in 0..=20 {
            for j in 0..=20 {
                let x = [i as f64 / 20.0, j as f64 / 20.0];
                let f = m.decision_value(&x).unwrap();
                let eq = c.equivalent_decision_value(&x, m.c).unwrap();
                assert!((f - eq).abs() <= c.margin + 1e-9, "{f} vs {eq}");
                if f.abs() > c.margin + 1e-9 {
                    assert_eq!(c.classify_features(&x).unwrap(), m.predict(&x).unwrap());
                }
            }
        }
    }

    #[test]
    fn single_positive_sv_fires() {
        let mut c = build_analog(&toy_model(2.0), &ideal_fit(140.0), &alpha_fit(), &vmap(), 1e-8).unwrap();
        c.sv_voltages.truncate(1);
        c.alpha_controls.truncate(1);
        c.signs = vec![1];
        c.bias_current = 0.0;
        let sv = c.sv_voltages[0].clone();
        assert_eq!(c.classify(&sv).unwrap(), 1);
    }

    #[test]
    fn mirrored_pair_ties_low() {
        let mut c = build_analog(&toy_model(2.0), &ideal_fit(140.0), &alpha_fit(), &vmap(), 1e-8).unwrap();
        c.sv_voltages = vec![vec![0.02, 0.05], vec![0.08, 0.05]];
        c.alpha_controls = vec![0.01, 0.01];
        c.signs = vec![1, -1];
        c.bias_current = 0.0;
        let x = [0.05, 0.05];
        assert_eq!(c.rail_difference(&x).unwrap(), 0.0);
        assert_eq!(c.classify(&x).unwrap(), 0);
    }

    #[test]
    fn build_errors() {
        let lin = train_binary(&[vec![0.0], vec![1.0]], &[-1, 1], Kernel::Linear, &TrainConfig::default(), (0, 1)).unwrap();
        assert!(matches!(
            build_analog(&lin, &ideal_fit(1.0), &alpha_fit(), &vmap(), 1e-8),
            Err(Error::WrongKernel { .. })
        ));
        let mut wide = toy_model(2.0);
        wide.kernel = Kernel::Rbf { gamma: 1.0 };
        wide.support_vectors = vec![vec![0.0; 6]];
        wide.dual_coeffs = vec![0.5];
        wide.labels = vec![1];
        assert!(matches!(
            build_analog(&wide, &ideal_fit(1.0), &alpha_fit(), &vmap(), 1e-8),
            Err(Error::AnalogCapacityExceeded { .. })
        ));
        let mut empty = toy_model(2.0);
        empty.support_vectors.clear();
        empty.dual_coeffs.clear();
        empty.labels.clear();
        assert!(matches!(
            build_analog(&empty, &ideal_fit(1.0), &alpha_fit(), &vmap(), 1e-8),
            Err(Error::DegenerateAlphas)
        ));
    }

    #[test]
    fn arity_and_index_checked() {
        let c = build_analog(&toy_model(2.0), &ideal_fit(140.0), &alpha_fit(), &vmap(), 1e-8).unwrap();
        assert!(c.kernel_response(0, &[0.0]).is_err());
        assert!(c.kernel_response(999, &[0.0, 0.0]).is_err());
        assert!(c.classify(&[0.0, 0.0, 0.0]).is_err());
    }
}
