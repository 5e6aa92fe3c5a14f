use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{LogRecord, Optimizer, OptimizerConfig, Parameters, TrainLog};
use crate::error::{Error, Result};
use crate::losses::paired_loss;
use crate::transforms::TransformConfig;

/// End-of-sequence token id. Content tokens are `1..vocab`.
pub const EOS: usize = 0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CopyExample {
    pub source: Vec<usize>,
    /// Gold output without the trailing EOS.
    pub target: Vec<usize>,
}

/// Token-copy translation: the target is the source itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CopyTask {
    pub vocab: usize,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for CopyTask {
    fn default() -> Self {
        Self { vocab: 50, min_len: 3, max_len: 12 }
    }
}

impl CopyTask {
    pub fn validate(&self) -> Result<()> {
        if self.vocab < 2 || self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::config(format!("invalid copy task {self:?}")));
        }
        Ok(())
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<CopyExample>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..n)
            .map(|_| {
                let len = rng.random_range(self.min_len..=self.max_len);
                let source: Vec<usize> = (0..len).map(|_| rng.random_range(1..self.vocab)).collect();
                CopyExample { target: source.clone(), source }
            })
            .collect())
    }
}

/// Autoregressive model over a fixed-size context.
///
/// The context at output step `t` is the source token aligned with `t` (or a
/// past-the-end marker), the previous output token (or a start marker) and
/// the position. Their embeddings are summed and fed through one rectifier
/// layer and an output projection to the vocabulary, all in NTK scaling.
/// Step `t` only sees output tokens `< t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceModel {
    vocab: usize,
    max_len: usize,
    src_embed: Array2<f64>,
    prev_embed: Array2<f64>,
    pos_embed: Array2<f64>,
    w_hidden: Array2<f64>,
    w_out: Array2<f64>,
}

/// Flattened teacher-forced positions.
struct Positions {
    src: Vec<usize>,
    prev: Vec<usize>,
    pos: Vec<usize>,
    gold: Vec<usize>,
}

struct SeqTrace {
    context: Array2<f64>,
    pre: Array2<f64>,
    hidden: Array2<f64>,
    logits: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceTrainConfig {
    pub optimizer: OptimizerConfig,
    /// Sentences per minibatch.
    pub batch_size: usize,
    pub log_every: usize,
    pub seed: u64,
}

impl Default for SequenceTrainConfig {
    fn default() -> Self {
        Self { optimizer: OptimizerConfig::adam(0.01, 300), batch_size: 16, log_every: 25, seed: 0 }
    }
}

impl SequenceModel {
    pub fn new(vocab: usize, max_len: usize, embed_dim: usize, hidden: usize, seed: u64) -> Result<Self> {
        if vocab < 2 || max_len == 0 || embed_dim == 0 || hidden == 0 {
            return Err(Error::config("sequence model needs vocab >= 2 and positive sizes"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = |rows: usize, cols: usize| {
            Array2::from_shape_simple_fn((rows, cols), || {
                <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
            })
        };
        Ok(Self {
            vocab,
            max_len,
            src_embed: normal(vocab + 1, embed_dim),
            prev_embed: normal(vocab + 1, embed_dim),
            pos_embed: normal(max_len + 2, embed_dim),
            w_hidden: normal(hidden, embed_dim),
            w_out: normal(vocab, hidden),
        })
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    fn context_ids(&self, source: &[usize], prefix: &[usize]) -> (usize, usize, usize) {
        let t = prefix.len();
        let src = source.get(t).copied().unwrap_or(self.vocab);
        let prev = prefix.last().copied().unwrap_or(self.vocab);
        (src, prev, t.min(self.max_len + 1))
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        match tokens.iter().find(|&&t| t >= self.vocab) {
            Some(&bad) => Err(Error::LabelOutOfRange { label: bad, dim: self.vocab }),
            None => Ok(()),
        }
    }

    fn run(&self, src: &[usize], prev: &[usize], pos: &[usize]) -> SeqTrace {
        let m = self.src_embed.ncols();
        let mut context = Array2::zeros((src.len(), m));
        let norm = 3f64.sqrt().recip();
        for (i, mut row) in context.outer_iter_mut().enumerate() {
            let (a, b, c) = (self.src_embed.row(src[i]), self.prev_embed.row(prev[i]), self.pos_embed.row(pos[i]));
            for j in 0..m {
                row[j] = (a[j] + b[j] + c[j]) * norm;
            }
        }
        let pre = context.dot(&self.w_hidden.t()) / (m as f64).sqrt();
        let hidden = pre.mapv(|v| v.max(0.0));
        let logits = hidden.dot(&self.w_out.t()) / (self.w_hidden.nrows() as f64).sqrt();
        SeqTrace { context, pre, hidden, logits }
    }

    /// Logits for the next token after `prefix`.
    pub fn step_logits(&self, source: &[usize], prefix: &[usize]) -> Result<Vec<f64>> {
        self.check_tokens(source)?;
        self.check_tokens(prefix)?;
        let (s, p, t) = self.context_ids(source, prefix);
        Ok(self.run(&[s], &[p], &[t]).logits.into_raw_vec_and_offset().0)
    }

    fn positions(&self, examples: &[&CopyExample]) -> Result<Positions> {
        let mut out = Positions { src: vec![], prev: vec![], pos: vec![], gold: vec![] };
        for ex in examples {
            self.check_tokens(&ex.source)?;
            self.check_tokens(&ex.target)?;
            for t in 0..=ex.target.len() {
                let (s, p, q) = self.context_ids(&ex.source, &ex.target[..t]);
                out.src.push(s);
                out.prev.push(p);
                out.pos.push(q);
                out.gold.push(ex.target.get(t).copied().unwrap_or(EOS));
            }
        }
        Ok(out)
    }

    /// Teacher-forced logits for every output position (EOS included), one
    /// row per position.
    pub fn teacher_forced_logits(&self, examples: &[CopyExample]) -> Result<(Array2<f64>, Vec<usize>)> {
        let refs: Vec<&CopyExample> = examples.iter().collect();
        let p = self.positions(&refs)?;
        Ok((self.run(&p.src, &p.prev, &p.pos).logits, p.gold))
    }

    /// Mean per-token paired loss and parameter gradients.
    fn loss_and_grad(&self, examples: &[&CopyExample], objective: &TransformConfig) -> Result<(f64, Vec<Array2<f64>>)> {
        let p = self.positions(examples)?;
        if p.gold.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let trace = self.run(&p.src, &p.prev, &p.pos);
        let n = p.gold.len() as f64;
        let mut seed = Array2::zeros(trace.logits.raw_dim());
        let mut total = 0.0;
        for ((z, &y), mut s) in trace.logits.outer_iter().zip(&p.gold).zip(seed.outer_iter_mut()) {
            let r = paired_loss(objective, z.as_slice().unwrap(), y)?;
            total += r.value;
            s.iter_mut().zip(&r.gradient).for_each(|(a, b)| *a = b / n);
        }

        let m = self.src_embed.ncols() as f64;
        let h = self.w_hidden.nrows() as f64;
        let d_out = seed.t().dot(&trace.hidden) / h.sqrt();
        let mut d_hidden = seed.dot(&self.w_out) / h.sqrt();
        d_hidden.zip_mut_with(&trace.pre, |g, &z| {
            if z <= 0.0 {
                *g = 0.0
            }
        });
        let d_w_hidden = d_hidden.t().dot(&trace.context) / m.sqrt();
        let d_context = d_hidden.dot(&self.w_hidden) / m.sqrt() / 3f64.sqrt();

        let mut d_src = Array2::zeros(self.src_embed.raw_dim());
        let mut d_prev = Array2::zeros(self.prev_embed.raw_dim());
        let mut d_pos = Array2::zeros(self.pos_embed.raw_dim());
        for (i, g) in d_context.axis_iter(Axis(0)).enumerate() {
            let mut row = d_src.row_mut(p.src[i]);
            row += &g;
            let mut row = d_prev.row_mut(p.prev[i]);
            row += &g;
            let mut row = d_pos.row_mut(p.pos[i]);
            row += &g;
        }
        Ok((total / n, vec![d_src, d_prev, d_pos, d_w_hidden, d_out]))
    }

    /// Teacher-forced token accuracy and mean zero fraction over `examples`.
    pub fn evaluate(&self, examples: &[CopyExample], objective: &TransformConfig) -> Result<(f64, f64, f64)> {
        let (logits, gold) = self.teacher_forced_logits(examples)?;
        let mut loss = 0.0;
        let mut correct = 0usize;
        let mut sparsity = 0.0;
        let mut p = vec![0.0; self.vocab];
        for (z, &y) in logits.outer_iter().zip(&gold) {
            let z = z.as_slice().unwrap();
            loss += paired_loss(objective, z, y)?.value;
            let best = (0..z.len()).fold(0, |b, i| if z[i] > z[b] { i } else { b });
            correct += usize::from(best == y);
            objective.apply_into(z, &mut p);
            sparsity += p.iter().filter(|&&v| v == 0.0).count() as f64 / p.len() as f64;
        }
        let n = gold.len() as f64;
        Ok((loss / n, correct as f64 / n, sparsity / n))
    }

    /// Teacher-forced training on the paired loss.
    pub fn train(&mut self, examples: &[CopyExample], objective: &TransformConfig, cfg: &SequenceTrainConfig) -> Result<TrainLog> {
        objective.validate()?;
        if examples.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if cfg.batch_size == 0 || cfg.log_every == 0 {
            return Err(Error::config("batch_size and log_every must be positive"));
        }
        let mut opt = Optimizer::new(cfg.optimizer)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut cursor = order.len();
        let start = Instant::now();
        let mut log = TrainLog::default();
        for step in 1..=cfg.optimizer.steps {
            if cursor >= order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let end = (cursor + cfg.batch_size).min(order.len());
            let batch: Vec<&CopyExample> = order[cursor..end].iter().map(|&i| &examples[i]).collect();
            cursor = end;
            let (_, grads) = self.loss_and_grad(&batch, objective)?;
            opt.step(self, &grads)?;
            if step % cfg.log_every == 0 || step == cfg.optimizer.steps {
                let (loss, accuracy, sparsity_mean) = self.evaluate(examples, objective)?;
                log.records.push(LogRecord {
                    step,
                    loss,
                    accuracy,
                    sparsity_mean,
                    wall_ms: start.elapsed().as_secs_f64() * 1e3,
                });
            }
        }
        Ok(log)
    }
}

impl Parameters for SequenceModel {
    fn params(&self) -> Vec<&Array2<f64>> {
        vec![&self.src_embed, &self.prev_embed, &self.pos_embed, &self.w_hidden, &self.w_out]
    }

    fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![&mut self.src_embed, &mut self.prev_embed, &mut self.pos_embed, &mut self.w_hidden, &mut self.w_out]
    }
}
