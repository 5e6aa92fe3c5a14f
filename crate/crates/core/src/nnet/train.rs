use std::io::Write;
use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Optimizer, OptimizerConfig, TinyNetwork};
use crate::error::{Error, Result};
use crate::losses::paired_loss;
use crate::transforms::TransformConfig;

/// Labelled inputs, one row per example.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Array2<f64>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(inputs: Array2<f64>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(Error::Shape { expected: inputs.nrows(), got: labels.len() });
        }
        if labels.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::LabelOutOfRange { label: bad, dim: classes });
        }
        Ok(Self { inputs, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    /// The first `n` examples.
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            inputs: self.inputs.slice(ndarray::s![..n, ..]).to_owned(),
            labels: self.labels[..n].to_vec(),
            classes: self.classes,
        }
    }

    fn select(&self, idx: &[usize]) -> (Array2<f64>, Vec<usize>) {
        (self.inputs.select(Axis(0), idx), idx.iter().map(|&i| self.labels[i]).collect())
    }
}

/// Gaussian clusters: one center per class drawn from `N(0, center_scale²)`,
/// points drawn around it with standard deviation `noise`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub center_scale: f64,
    pub noise: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self { classes: 10, dim: 16, per_class: 40, center_scale: 1.0, noise: 0.35 }
    }
}

/// Examples are interleaved by class, so any prefix is roughly balanced.
pub fn gaussian_clusters(cfg: &ClusterConfig, seed: u64) -> Result<Dataset> {
    if cfg.classes == 0 || cfg.dim == 0 || cfg.per_class == 0 {
        return Err(Error::config("cluster task needs positive classes, dim and per_class"));
    }
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = Array2::from_shape_simple_fn((cfg.classes, cfg.dim), || {
        cfg.center_scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
    });
    let n = cfg.classes * cfg.per_class;
    let mut inputs = Array2::zeros((n, cfg.dim));
    let mut labels = Vec::with_capacity(n);
    for (i, mut row) in inputs.outer_iter_mut().enumerate() {
        let y = i % cfg.classes;
        row.iter_mut().zip(centers.row(y)).for_each(|(x, c)| *x = c + noise.sample(&mut rng));
        labels.push(y);
    }
    Dataset::new(inputs, labels, cfg.classes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub log_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { optimizer: OptimizerConfig::adam(0.01, 400), batch_size: 32, log_every: 10, seed: 0 }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub sparsity_mean: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    pub fn last(&self) -> Option<&LogRecord> {
        self.records.last()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// JSONL with `wall_ms` zeroed; identical across reruns with one seed.
    pub fn deterministic_jsonl(&self) -> String {
        let mut buf = Vec::new();
        let log = TrainLog {
            records: self.records.iter().map(|r| LogRecord { wall_ms: 0.0, ..r.clone() }).collect(),
        };
        log.write_jsonl(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf8 json")
    }
}

/// Full-dataset metrics of a network under a transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub loss: f64,
    pub accuracy: f64,
    /// Mean fraction of exactly-zero output components.
    pub sparsity_mean: f64,
    /// Mean largest output weight.
    pub max_weight_mean: f64,
    /// Mean total output mass (1 for normalized transforms).
    pub mass_mean: f64,
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn evaluate(net: &TinyNetwork, data: &Dataset, objective: &TransformConfig) -> Result<Metrics> {
    let logits = net.forward_batch(data.inputs.view())?;
    let mut m = Metrics { loss: 0.0, accuracy: 0.0, sparsity_mean: 0.0, max_weight_mean: 0.0, mass_mean: 0.0 };
    let mut p = vec![0.0; net.output_dim()];
    for (z, &y) in logits.outer_iter().zip(&data.labels) {
        let z = z.as_slice().expect("contiguous logits");
        m.loss += paired_loss(objective, z, y)?.value;
        if argmax(z) == y {
            m.accuracy += 1.0;
        }
        objective.apply_into(z, &mut p);
        m.sparsity_mean += p.iter().filter(|&&v| v == 0.0).count() as f64 / p.len() as f64;
        m.max_weight_mean += p.iter().copied().fold(0.0, f64::max);
        m.mass_mean += p.iter().sum::<f64>();
    }
    let n = data.len() as f64;
    m.loss /= n;
    m.accuracy /= n;
    m.sparsity_mean /= n;
    m.max_weight_mean /= n;
    m.mass_mean /= n;
    Ok(m)
}

/// Minibatch training of `net` on the loss paired with `objective`.
///
/// Batches are drawn by reshuffling the dataset each epoch with a generator
/// seeded from `cfg.seed`. Metrics over the whole dataset are logged every
/// `log_every` steps and after the last step; with zero steps the log is
/// empty and the network is untouched.
pub fn train(net: &mut TinyNetwork, data: &Dataset, objective: &TransformConfig, cfg: &TrainConfig) -> Result<TrainLog> {
    objective.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if cfg.batch_size == 0 || cfg.log_every == 0 {
        return Err(Error::config("batch_size and log_every must be positive"));
    }
    let mut opt = Optimizer::new(cfg.optimizer)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let start = Instant::now();
    let mut log = TrainLog::default();

    for step in 1..=cfg.optimizer.steps {
        if cursor >= order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + cfg.batch_size).min(order.len());
        let (x, y) = data.select(&order[cursor..end]);
        cursor = end;

        let (_, grads, _) = net.loss_and_grad(x.view(), &y, objective)?;
        opt.step(net, &grads)?;

        if step % cfg.log_every == 0 || step == cfg.optimizer.steps {
            let m = evaluate(net, data, objective)?;
            log.records.push(LogRecord {
                step,
                loss: m.loss,
                accuracy: m.accuracy,
                sparsity_mean: m.sparsity_mean,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            });
        }
    }
    Ok(log)
}
