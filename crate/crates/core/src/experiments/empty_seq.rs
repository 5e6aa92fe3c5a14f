use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::{beam_search, score_sequence, CopyExample, SequenceModel};
use crate::transforms::TransformConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmptySeqReport {
    pub transform: String,
    pub examples: usize,
    pub empty_preferred: usize,
    /// Percentage of examples where the empty output outscores the beam
    /// hypothesis.
    pub rate_pct: f64,
    /// Examples whose first-step EOS weight is exactly zero.
    pub eos_zero_at_start: usize,
    /// Exact-match rate of the beam hypothesis against the gold target.
    pub exact_match: f64,
}

/// Share of `dev` examples for which the empty sequence has a higher
/// normalized score than the beam-decoded hypothesis.
pub fn empty_sequence_rate(
    model: &SequenceModel,
    dev: &[CopyExample],
    cfg: &TransformConfig,
    beam_width: usize,
) -> Result<EmptySeqReport> {
    if dev.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let max_steps = model.max_len() + 2;
    let mut preferred = 0;
    let mut eos_zero = 0;
    let mut exact = 0;
    for ex in dev {
        let hyp = beam_search(model, &ex.source, cfg, beam_width, max_steps)?;
        let (empty, _) = score_sequence(model, &ex.source, &[], cfg)?;
        if empty == f64::NEG_INFINITY {
            eos_zero += 1;
        }
        if empty > hyp.log_score {
            preferred += 1;
        }
        if hyp.finished && hyp.tokens == ex.target {
            exact += 1;
        }
    }
    Ok(EmptySeqReport {
        transform: cfg.label(),
        examples: dev.len(),
        empty_preferred: preferred,
        rate_pct: 100.0 * preferred as f64 / dev.len() as f64,
        eos_zero_at_start: eos_zero,
        exact_match: exact as f64 / dev.len() as f64,
    })
}
