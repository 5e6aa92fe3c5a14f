use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{SequenceModel, EOS};
use crate::error::{Error, Result};
use crate::transforms::TransformConfig;

/// Per-step weights used for scoring.
///
/// `normalized` is the transform output rescaled to sum to one. When the
/// transform returns all zeros (possible for α-ReLU) `normalized` is all
/// zeros too and `fallback` holds the argmax of the raw logits, which is the
/// only token decoding may then emit, with probability 0.
#[derive(Debug, Clone, PartialEq)]
pub struct StepWeights {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub fallback: Option<usize>,
}

impl StepWeights {
    pub fn compute(model: &SequenceModel, source: &[usize], prefix: &[usize], cfg: &TransformConfig) -> Result<Self> {
        let z = model.step_logits(source, prefix)?;
        let raw = cfg.apply(&z)?.into_values();
        let mass: f64 = raw.iter().sum();
        if mass > 0.0 {
            let normalized = raw.iter().map(|w| w / mass).collect();
            Ok(Self { raw, normalized, fallback: None })
        } else {
            let best = (0..z.len()).fold(0, |b, i| if z[i] > z[b] { i } else { b });
            Ok(Self { normalized: vec![0.0; raw.len()], raw, fallback: Some(best) })
        }
    }

    fn log_normalized(&self, token: usize) -> f64 {
        self.normalized[token].ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    /// Output tokens without the trailing EOS.
    pub tokens: Vec<usize>,
    /// `Σ log` of per-step normalized weights, EOS step included.
    pub log_score: f64,
    /// `Σ log` of per-step raw transform weights.
    pub raw_log_score: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Sequence probability under per-step normalization.
    pub fn score(&self) -> f64 {
        self.log_score.exp()
    }
}

/// Normalized and raw log scores of `tokens` followed by EOS.
///
/// For the empty sequence this is the log weight of EOS at the first step.
pub fn score_sequence(model: &SequenceModel, source: &[usize], tokens: &[usize], cfg: &TransformConfig) -> Result<(f64, f64)> {
    let mut log = 0.0;
    let mut raw = 0.0;
    for t in 0..=tokens.len() {
        let w = StepWeights::compute(model, source, &tokens[..t], cfg)?;
        let token = tokens.get(t).copied().unwrap_or(EOS);
        log += w.log_normalized(token);
        raw += w.raw[token].ln();
    }
    Ok((log, raw))
}

fn by_score_desc(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.log_score.total_cmp(&a.log_score)
}

/// Beam search with per-step weights from `cfg`.
///
/// Each live hypothesis is extended by its `beam_width` best tokens, and the
/// best `beam_width` extensions overall are kept. Extensions ending in EOS
/// are set aside as finished. Search stops when no live hypothesis can beat
/// the best finished one (scores never increase), when none are left, or
/// after `max_steps` tokens. No length normalization is applied. Width 1 is
/// greedy decoding.
pub fn beam_search(
    model: &SequenceModel,
    source: &[usize],
    cfg: &TransformConfig,
    beam_width: usize,
    max_steps: usize,
) -> Result<Hypothesis> {
    if beam_width == 0 {
        return Err(Error::config("beam width must be at least 1"));
    }
    cfg.validate()?;
    let mut live = vec![Hypothesis { tokens: vec![], log_score: 0.0, raw_log_score: 0.0, finished: false }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for _ in 0..max_steps.max(1) {
        let mut candidates = Vec::new();
        for h in &live {
            let w = StepWeights::compute(model, source, &h.tokens, cfg)?;
            let choices: Vec<usize> = match w.fallback {
                Some(t) => vec![t],
                None => {
                    let mut idx: Vec<usize> = (0..w.normalized.len()).filter(|&i| w.normalized[i] > 0.0).collect();
                    idx.sort_by(|&a, &b| w.normalized[b].total_cmp(&w.normalized[a]));
                    idx.truncate(beam_width);
                    idx
                }
            };
            for t in choices {
                let mut tokens = h.tokens.clone();
                let finished = t == EOS;
                if !finished {
                    tokens.push(t);
                }
                candidates.push(Hypothesis {
                    tokens,
                    log_score: h.log_score + w.log_normalized(t),
                    raw_log_score: h.raw_log_score + w.raw[t].ln(),
                    finished,
                });
            }
        }
        candidates.sort_by(by_score_desc);
        candidates.truncate(beam_width);
        live.clear();
        for c in candidates {
            if c.finished {
                finished.push(c);
            } else {
                live.push(c);
            }
        }
        finished.sort_by(by_score_desc);
        let best_finished = finished.first().map(|h| h.log_score);
        let best_live = live.first().map(|h| h.log_score);
        match (best_finished, best_live) {
            (_, None) => break,
            (Some(f), Some(l)) if f >= l => break,
            _ => {}
        }
    }

    finished.sort_by(by_score_desc);
    if let Some(best) = finished.into_iter().next() {
        return Ok(best);
    }
    live.sort_by(by_score_desc);
    Ok(live.into_iter().next().expect("beam keeps at least one hypothesis"))
}
