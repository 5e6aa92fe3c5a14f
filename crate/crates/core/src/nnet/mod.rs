//! Small trainable models with hand-written reverse-mode gradients.
//!
//! [`TinyNetwork`] is a bias-free feedforward net in NTK parameterization,
//! used for the classification and kernel experiments. [`SequenceModel`] is
//! a toy autoregressive model for the decoding experiments.

mod decode;
mod network;
mod optim;
mod seq;
mod train;

pub use decode::{beam_search, score_sequence, Hypothesis, StepWeights};
pub use network::{Activation, ForwardTrace, TinyNetwork};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use seq::{CopyExample, CopyTask, SequenceModel, SequenceTrainConfig, EOS};
pub use train::{evaluate, gaussian_clusters, train, ClusterConfig, Dataset, LogRecord, Metrics, TrainConfig, TrainLog};

use ndarray::Array2;

/// Read and write access to a model's parameter matrices, in a fixed order.
pub trait Parameters {
    fn params(&self) -> Vec<&Array2<f64>>;
    fn params_mut(&mut self) -> Vec<&mut Array2<f64>>;

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

pub(crate) fn zeros_like(params: &[&Array2<f64>]) -> Vec<Array2<f64>> {
    params.iter().map(|p| Array2::zeros(p.raw_dim())).collect()
}
