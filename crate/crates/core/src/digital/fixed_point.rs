use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::svm::{decision_bit, BinarySvm, Kernel};

/// Bit widths of the linear datapath.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointFormat {
    pub input_bits: u32,
    pub weight_bits: u32,
    /// Signed accumulator width. Sized by [`FixedPointFormat::for_dims`] so
    /// that no input can overflow it.
    pub accumulator_bits: u32,
}

impl Default for FixedPointFormat {
    fn default() -> Self {
        Self::new(4, 8, 5)
    }
}

impl FixedPointFormat {
    /// Format with an accumulator of `input_bits + weight_bits +
    /// ceil(log2 dims) + 2` bits: one for the sign and one for the bias,
    /// which is clamped to the product-sum range.
    pub fn new(input_bits: u32, weight_bits: u32, dims: usize) -> Self {
        Self {
            input_bits,
            weight_bits,
            accumulator_bits: input_bits + weight_bits + ceil_log2(dims.max(1)) + 2,
        }
    }

    pub fn for_dims(&self, dims: usize) -> Self {
        Self::new(self.input_bits, self.weight_bits, dims)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=16).contains(&self.input_bits) {
            return Err(Error::InvalidParameter(format!(
                "input bits must be in 1..=16, got {}",
                self.input_bits
            )));
        }
        if !(2..=16).contains(&self.weight_bits) {
            return Err(Error::InvalidParameter(format!(
                "weight bits must be in 2..=16, got {}",
                self.weight_bits
            )));
        }
        if self.accumulator_bits > 63 {
            return Err(Error::InvalidParameter("accumulator wider than 63 bits".into()));
        }
        Ok(())
    }

    /// Largest input code, `2^input_bits - 1`.
    pub fn input_max(&self) -> u32 {
        (1u32 << self.input_bits) - 1
    }

    /// Largest weight magnitude of the symmetric quantizer.
    pub fn weight_max(&self) -> i32 {
        (1i32 << (self.weight_bits - 1)) - 1
    }

    /// Real value of one input LSB.
    pub fn input_step(&self) -> f64 {
        1.0 / f64::from(self.input_max())
    }

    fn accumulator_limit(&self) -> i64 {
        (1i64 << (self.accumulator_bits - 1)) - 1
    }
}

fn ceil_log2(n: usize) -> u32 {
    usize::BITS - (n - 1).leading_zeros()
}

/// ADC model: `round(x · (2^bits - 1))` with halves rounded up. Inputs are
/// clamped to `[0, 1]` first.
pub fn quantize_inputs(x: &[f64], format: &FixedPointFormat) -> Vec<u32> {
    let max = f64::from(format.input_max());
    x.iter()
        .map(|&v| {
            let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
            ((v * max + 0.5).floor() as u32).min(format.input_max())
        })
        .collect()
}

/// Integer weights, bias and scales of one linear binary classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedLinearClassifier {
    pub weights: Vec<i32>,
    /// Bias at the fixed-point position of the weight-input products.
    pub bias: i64,
    pub format: FixedPointFormat,
    pub class_pair: (usize, usize),
    /// Real value of one weight LSB; 0 for an all-zero weight vector.
    pub weight_scale: f64,
    pub float_weights: Vec<f64>,
    pub float_bias: f64,
}

/// Symmetric uniform quantization of `w` to `weight_bits` with
/// `max|w|` mapped to `2^(weight_bits-1) - 1`. Values are rounded to
/// nearest with halves away from zero. The bias is rounded at the product
/// position and clamped just past the reachable product-sum range, which
/// leaves every decision sign unchanged.
pub fn quantize_linear(model: &BinarySvm, format: &FixedPointFormat) -> Result<QuantizedLinearClassifier> {
    let w = model
        .primal_weights
        .as_ref()
        .filter(|_| matches!(model.kernel, Kernel::Linear))
        .ok_or(Error::WrongKernel {
            expected: "linear",
            found: model.kernel.name(),
        })?;
    quantize_weights(w, model.bias, format, model.class_pair)
}

/// Quantizes an explicit weight vector and bias.
pub fn quantize_weights(w: &[f64], b: f64, format: &FixedPointFormat, class_pair: (usize, usize)) -> Result<QuantizedLinearClassifier> {
    let format = format.for_dims(w.len());
    format.validate()?;
    if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(Error::InvalidParameter("non-finite weight or bias".into()));
    }
    let qmax = format.weight_max();
    let max_abs = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let (weights, weight_scale, bias) = if max_abs == 0.0 {
        (vec![0; w.len()], 0.0, b.signum() as i64 * i64::from(b != 0.0))
    } else {
        let scale = max_abs / f64::from(qmax);
        let weights: Vec<i32> = w.iter().map(|&v| ((v / scale).round() as i32).clamp(-qmax, qmax)).collect();
        let reach: i64 = weights.iter().map(|&q| i64::from(q.unsigned_abs())).sum::<i64>() * i64::from(format.input_max());
        let raw = (b / (scale * format.input_step())).round();
        let limit = (reach + 1) as f64;
        (weights, scale, raw.clamp(-limit, limit) as i64)
    };

    Ok(QuantizedLinearClassifier {
        weights,
        bias,
        format,
        class_pair,
        weight_scale,
        float_weights: w.to_vec(),
        float_bias: b,
    })
}

impl QuantizedLinearClassifier {
    pub fn dims(&self) -> usize {
        self.weights.len()
    }

    /// Products summed by a pairwise adder tree, left to right at each
    /// level, then the bias.
    pub fn accumulate(&self, qx: &[u32]) -> Result<i64> {
        if qx.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                found: qx.len(),
            });
        }
        let mut level: Vec<i64> = self.weights.iter().zip(qx).map(|(&w, &x)| i64::from(w) * i64::from(x)).collect();
        while level.len() > 1 {
            level = level.chunks(2).map(|c| c.iter().sum()).collect();
        }
        let acc = level.first().copied().unwrap_or(0) + self.bias;
        let limit = self.format.accumulator_limit();
        assert!(
            (-limit - 1..=limit).contains(&acc),
            "accumulator {acc} overflows {} bits",
            self.format.accumulator_bits
        );
        Ok(acc)
    }

    /// 1 iff the accumulator is positive.
    pub fn predict_fixed(&self, qx: &[u32]) -> Result<u8> {
        Ok(u8::from(self.accumulate(qx)? > 0))
    }

    /// Quantizes `x` and classifies it.
    pub fn predict_features(&self, x: &[f64]) -> Result<u8> {
        self.predict_fixed(&quantize_inputs(x, &self.format))
    }

    /// Accumulator mapped back to decision-value units.
    pub fn dequantized_decision(&self, qx: &[u32]) -> Result<f64> {
        let acc = self.accumulate(qx)? as f64;
        Ok(acc * self.weight_scale * self.format.input_step())
    }

    /// Float decision value of the source model.
    pub fn float_decision(&self, x: &[f64]) -> f64 {
        self.float_weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.float_bias
    }

    /// Float sign bit of the source model, with the shared tie rule.
    pub fn float_predict(&self, x: &[f64]) -> u8 {
        decision_bit(self.float_decision(x))
    }

    /// Upper bound on `|f(x) - f_q(x)|` at input `x`, where `f_q` is the
    /// dequantized accumulator. From `w·x - ŵ·x̂ = (w - ŵ)·x + ŵ·(x - x̂)`:
    /// half a weight LSB per unit of `Σ|x_i|`, half an input LSB per unit of
    /// `Σ|ŵ_i|`, and the realized bias error. A float/fixed sign
    /// disagreement implies `|f(x)|` is at most this value.
    pub fn error_bound(&self, x: &[f64]) -> f64 {
        if self.weight_scale == 0.0 {
            return 0.0;
        }
        let sx = self.format.input_step();
        let sum_x: f64 = x.iter().map(|v| v.clamp(0.0, 1.0)).sum();
        let sum_w: f64 = self.weights.iter().map(|&q| f64::from(q).abs() * self.weight_scale).sum();
        let bias_err = (self.float_bias - self.bias as f64 * self.weight_scale * sx).abs();
        let bound = 0.5 * self.weight_scale * sum_x + 0.5 * sx * sum_w + bias_err;
        bound * (1.0 + 1e-12) + 1e-15
    }

    /// Weights that are zero or a signed power of two once the common
    /// factor is divided out.
    pub fn cheap_weight_count(&self) -> usize {
        reduce_weights(&self.weights)
            .iter()
            .filter(|&&w| w == 0 || w.unsigned_abs().is_power_of_two())
            .count()
    }
}

/// Integer weights divided by their greatest common divisor. A positive
/// common factor does not change the sign of `w·x + b` for integer `x`
/// (the bias is rescaled with a floor), so a bespoke datapath only needs
/// the reduced constants.
pub fn reduce_weights(weights: &[i32]) -> Vec<i32> {
    fn gcd(a: u32, b: u32) -> u32 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    let g = weights.iter().fold(0u32, |g, &w| gcd(g, w.unsigned_abs()));
    if g <= 1 {
        return weights.to_vec();
    }
    weights.iter().map(|&w| w / g as i32).collect()
}
