//! Small-scale experiments on top of the models in [`crate::nnet`].
//!
//! Each experiment returns plain report structs; CSV writers live next to
//! them so the CLI only has to choose file names.

pub mod dynamics;
pub mod empty_seq;
pub mod ntk;
pub mod sparsity;
pub mod tasks;
pub mod tau_sweep;

pub use dynamics::{dynamics_check, DynamicsReport, ProbeReport};
pub use empty_seq::{empty_sequence_rate, EmptySeqReport};
pub use ntk::{empirical_ntk, min_eigenvalue, KernelMatrix};
pub use sparsity::{sparsity_histogram, HistogramBucket, SparsityStats};
pub use tasks::{ClassificationTask, CopyTaskConfig};
pub use tau_sweep::{tau_sweep, SweepPoint};
