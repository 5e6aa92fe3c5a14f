//! Seeded task definitions shared by the experiments and the CLI.

use serde::{Deserialize, Serialize};

use crate::calibration::calibrate_tau;
use crate::error::Result;
use crate::nnet::{
    evaluate, gaussian_clusters, train, Activation, ClusterConfig, CopyExample, CopyTask, Dataset, Metrics,
    OptimizerConfig, SequenceModel, SequenceTrainConfig, TinyNetwork, TrainConfig, TrainLog,
};
use crate::transforms::{TransformConfig, TransformKind};

/// How α-ReLU's threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauChoice {
    /// Mean entmax threshold of the untrained model's first batch.
    Calibrate,
    Fixed(f64),
}

impl std::str::FromStr for TauChoice {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "calibrate" {
            return Ok(TauChoice::Calibrate);
        }
        s.parse::<f64>()
            .ok()
            .filter(|t| t.is_finite())
            .map(TauChoice::Fixed)
            .ok_or_else(|| crate::Error::Config(format!("tau must be `calibrate` or a finite number, got `{s}`")))
    }
}

fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Objective for `kind`; entmax kinds use the sorted solver when α = 1.5.
pub fn objective_for(kind: TransformKind, alpha: f64, tau: f64) -> TransformConfig {
    match kind {
        TransformKind::Softmax => TransformConfig::softmax(),
        TransformKind::Sparsemax => TransformConfig::sparsemax(),
        TransformKind::Entmax15Sorted | TransformKind::EntmaxBisect if alpha == 1.5 => TransformConfig::entmax15(),
        TransformKind::Entmax15Sorted | TransformKind::EntmaxBisect => TransformConfig::entmax(alpha),
        TransformKind::Arelu => TransformConfig::arelu(alpha, tau),
    }
}

/// Classification on Gaussian clusters with a [`TinyNetwork`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationTask {
    pub clusters: ClusterConfig,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub alpha: f64,
}

impl Default for ClassificationTask {
    fn default() -> Self {
        Self {
            clusters: ClusterConfig::default(),
            hidden: vec![64],
            train: TrainConfig { optimizer: OptimizerConfig::adam(0.01, 300), batch_size: 32, log_every: 10, seed: 0 },
            alpha: 1.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClassificationRun {
    pub objective: TransformConfig,
    pub net: TinyNetwork,
    pub log: TrainLog,
    pub metrics: Metrics,
}

impl ClassificationTask {
    pub fn dataset(&self, seed: u64) -> Result<Dataset> {
        gaussian_clusters(&self.clusters, derive_seed(seed, 1))
    }

    pub fn network(&self, seed: u64) -> Result<TinyNetwork> {
        let mut widths = vec![self.clusters.dim];
        widths.extend(&self.hidden);
        widths.push(self.clusters.classes);
        TinyNetwork::new(&widths, Activation::Relu, derive_seed(seed, 2))
    }

    /// τ from one forward pass of the untrained network over the first batch.
    pub fn calibrate(&self, net: &TinyNetwork, data: &Dataset) -> Result<f64> {
        let batch = data.head(self.train.batch_size);
        let logits = net.forward_batch(batch.inputs.view())?;
        calibrate_tau(logits.outer_iter().map(|r| r.to_slice().expect("contiguous")), self.alpha)
    }

    /// Trains a fresh seeded network on the loss paired with `kind`.
    pub fn run(&self, kind: TransformKind, tau: TauChoice, seed: u64) -> Result<ClassificationRun> {
        let data = self.dataset(seed)?;
        let mut net = self.network(seed)?;
        let tau = match tau {
            TauChoice::Fixed(t) => t,
            TauChoice::Calibrate => self.calibrate(&net, &data)?,
        };
        let objective = objective_for(kind, self.alpha, tau);
        let cfg = TrainConfig { seed: derive_seed(seed, 3), ..self.train };
        let log = train(&mut net, &data, &objective, &cfg)?;
        let metrics = evaluate(&net, &data, &objective)?;
        Ok(ClassificationRun { objective, net, log, metrics })
    }
}

/// Token-copy task with a [`SequenceModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopyTaskConfig {
    pub task: CopyTask,
    pub train_size: usize,
    pub dev_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub train: SequenceTrainConfig,
    pub beam_width: usize,
    pub alpha: f64,
}

impl Default for CopyTaskConfig {
    fn default() -> Self {
        Self {
            task: CopyTask { vocab: 100, ..CopyTask::default() },
            train_size: 400,
            dev_size: 100,
            embed_dim: 32,
            hidden: 64,
            train: SequenceTrainConfig { optimizer: OptimizerConfig::adam(0.01, 120), batch_size: 16, log_every: 25, seed: 0 },
            beam_width: 5,
            alpha: 1.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CopyRun {
    pub objective: TransformConfig,
    pub model: SequenceModel,
    pub log: TrainLog,
    pub dev: Vec<CopyExample>,
}

impl CopyTaskConfig {
    pub fn data(&self, seed: u64) -> Result<(Vec<CopyExample>, Vec<CopyExample>)> {
        let train = self.task.sample(self.train_size, derive_seed(seed, 11))?;
        let dev = self.task.sample(self.dev_size, derive_seed(seed, 12))?;
        Ok((train, dev))
    }

    pub fn model(&self, seed: u64) -> Result<SequenceModel> {
        SequenceModel::new(self.task.vocab, self.task.max_len, self.embed_dim, self.hidden, derive_seed(seed, 13))
    }

    /// τ averaged over every token position of the first training batch.
    pub fn calibrate(&self, model: &SequenceModel, train: &[CopyExample]) -> Result<f64> {
        let first = &train[..self.train.batch_size.min(train.len())];
        let (logits, _) = model.teacher_forced_logits(first)?;
        calibrate_tau(logits.outer_iter().map(|r| r.to_slice().expect("contiguous")), self.alpha)
    }

    pub fn run(&self, kind: TransformKind, tau: TauChoice, seed: u64) -> Result<CopyRun> {
        let (train, dev) = self.data(seed)?;
        let mut model = self.model(seed)?;
        let tau = match tau {
            TauChoice::Fixed(t) => t,
            TauChoice::Calibrate => self.calibrate(&model, &train)?,
        };
        let objective = objective_for(kind, self.alpha, tau);
        let cfg = SequenceTrainConfig { seed: derive_seed(seed, 14), ..self.train };
        let log = model.train(&train, &objective, &cfg)?;
        Ok(CopyRun { objective, model, log, dev })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_choice_parsing() {
        assert_eq!("calibrate".parse::<TauChoice>().unwrap(), TauChoice::Calibrate);
        assert_eq!("0.33".parse::<TauChoice>().unwrap(), TauChoice::Fixed(0.33));
        assert!("nan".parse::<TauChoice>().is_err());
        assert!("x".parse::<TauChoice>().is_err());
    }

    #[test]
    fn calibrated_tau_matches_manual_average() {
        let task = ClassificationTask::default();
        let data = task.dataset(5).unwrap();
        let net = task.network(5).unwrap();
        let tau = task.calibrate(&net, &data).unwrap();
        let head = data.head(task.train.batch_size);
        let mut sum = 0.0;
        let mut rows = 0.0;
        for x in head.inputs.outer_iter() {
            let z = net.forward(x.as_slice().unwrap()).unwrap();
            sum += crate::transforms::entmax_bisect(&z, 1.5).unwrap().threshold;
            rows += 1.0;
        }
        assert!((tau - sum / rows).abs() < 1e-12);
    }
}
