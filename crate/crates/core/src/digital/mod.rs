//! Bit-exact model of the bespoke linear datapath and the encoder that
//! turns pairwise outcomes into a class.

mod encoder;
mod fixed_point;

pub use encoder::{build_encoder, ovo_pairs, EncoderTable, MAX_ENCODER_CLASSES};
pub use fixed_point::{quantize_inputs, quantize_linear, quantize_weights, reduce_weights, FixedPointFormat, QuantizedLinearClassifier};
