//! Sparse output transformations for classifiers and sequence models.
//!
//! The crate provides exact softmax, sparsemax and α-entmax maps together
//! with α-ReLU, a thresholdless relative of entmax:
//!
//! ```text
//! arelu_i(z) = [(α − 1)·z_i − τ]_+^{1/(α − 1)}
//! ```
//!
//! where τ is a fixed constant instead of the data-dependent normalizer that
//! entmax needs. Each transform is paired with a loss whose gradient with
//! respect to the logits is `σ(z) − e_y` (see [`losses`]).
//!
//! Beyond the kernels, the crate carries the machinery for small-scale
//! experiments: a feedforward network in NTK parameterization, a toy
//! autoregressive copy model with beam search, empirical neural tangent
//! kernels, and a micro-benchmark harness.

pub mod bench;
pub mod calibration;
pub mod error;
pub mod experiments;
pub mod losses;
pub mod nnet;
pub mod transforms;

pub use error::{Error, Result};
pub use losses::LossResult;
pub use transforms::{ThresholdResult, TransformConfig, TransformKind, WeightVector};
