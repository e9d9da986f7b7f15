//! Mixed-kernel, mixed-signal one-vs-one SVMs.
//!
//! Each binary classifier of a one-vs-one decomposition is trained with
//! both a linear and an RBF kernel; the RBF variant is kept only when it
//! strictly beats the linear one on a validation fold. Linear classifiers
//! are realized as bit-exact fixed-point datapaths, RBF classifiers as a
//! behavioral model of a subthreshold analog kernel circuit, and an
//! encoder table turns the per-pair bits into a class.
//!
//! Module map:
//! - [`dataset`]: CSV ingestion, stratified split, normalization, feature selection
//! - [`svm`]: kernels, SMO training, binary decision functions
//! - [`analog`]: device curves, Gaussian/logistic calibration, analog RBF classifier
//! - [`digital`]: fixed-point linear classifier and encoder decision logic
//! - [`explorer`]: per-pair kernel selection and the assembled [`MixedSvmSystem`]
//! - [`cost`]: additive area/power model and its calibration
//! - [`report`]: JSON and text reports

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analog;
pub mod cost;
pub mod dataset;
pub mod digital;
pub mod error;
pub mod explorer;
mod linalg;
pub mod report;
pub mod svm;

pub use error::{Error, Result};
pub use explorer::{evaluate_system, explore, ExploreConfig, KernelMode, MixedSvmSystem};
pub use svm::{BinarySvm, Kernel, TrainConfig};
