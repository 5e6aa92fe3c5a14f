use super::tasks::{ClassificationTask, TauChoice};
use crate::error::{Error, Result};
use crate::nnet::TrainLog;
use crate::transforms::TransformKind;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub tau: f64,
    pub log: TrainLog,
    pub final_accuracy: f64,
    /// Accuracy at the first logged step.
    pub early_accuracy: f64,
    /// Mean logged accuracy, a summary of how fast the curve rises.
    pub mean_accuracy: f64,
}

/// Trains one α-ReLU model per τ, all from the same seed.
pub fn tau_sweep(taus: &[f64], task: &ClassificationTask, seed: u64) -> Result<Vec<SweepPoint>> {
    if let Some(bad) = taus.iter().find(|t| !t.is_finite()) {
        return Err(Error::config(format!("tau values must be finite, got {bad}")));
    }
    taus.iter()
        .map(|&tau| {
            let run = task.run(TransformKind::Arelu, TauChoice::Fixed(tau), seed)?;
            let acc: Vec<f64> = run.log.records.iter().map(|r| r.accuracy).collect();
            let mean_accuracy = if acc.is_empty() { 0.0 } else { acc.iter().sum::<f64>() / acc.len() as f64 };
            Ok(SweepPoint {
                tau,
                final_accuracy: run.metrics.accuracy,
                early_accuracy: acc.first().copied().unwrap_or(run.metrics.accuracy),
                mean_accuracy,
                log: run.log,
            })
        })
        .collect()
}

/// Aligned curves, header `tau,step,loss,accuracy,sparsity_mean`.
pub fn write_curves_csv<W: std::io::Write>(points: &[SweepPoint], w: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["tau", "step", "loss", "accuracy", "sparsity_mean"])?;
    for p in points {
        for r in &p.log.records {
            csv.write_record([
                p.tau.to_string(),
                r.step.to_string(),
                r.loss.to_string(),
                r.accuracy.to_string(),
                r.sparsity_mean.to_string(),
            ])?;
        }
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::OptimizerConfig;

    #[test]
    fn single_tau_equals_plain_run() {
        let mut task = ClassificationTask::default();
        task.train.optimizer = OptimizerConfig::adam(0.01, 30);
        let sweep = tau_sweep(&[0.2], &task, 3).unwrap();
        let run = task.run(TransformKind::Arelu, TauChoice::Fixed(0.2), 3).unwrap();
        assert_eq!(sweep[0].log.deterministic_jsonl(), run.log.deterministic_jsonl());
        assert_eq!(sweep[0].final_accuracy, run.metrics.accuracy);
    }

    #[test]
    fn rejects_non_finite_tau() {
        assert!(tau_sweep(&[f64::NAN], &ClassificationTask::default(), 0).is_err());
    }
}
