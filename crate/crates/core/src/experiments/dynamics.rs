use serde::{Deserialize, Serialize};

use super::ntk::{kernel_from_sensitivities, min_eigenvalue};
use crate::error::{Error, Result};
use crate::losses::paired_loss;
use crate::nnet::{Dataset, Optimizer, OptimizerConfig, TinyNetwork};
use crate::transforms::TransformConfig;

/// Agreement between predicted and observed logit velocity for one probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub step: usize,
    pub probe: usize,
    pub cosine: f64,
    pub rel_error: f64,
    pub predicted_norm: f64,
    pub observed_norm: f64,
    /// Smallest eigenvalue of `K(x, x)`.
    pub kernel_min_eig: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsReport {
    pub transform: String,
    pub width: usize,
    pub eta: f64,
    pub probes: Vec<ProbeReport>,
    pub min_cosine: f64,
    pub mean_cosine: f64,
    pub mean_rel_error: f64,
    pub min_kernel_eig: f64,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 && nb == 0.0 {
        1.0
    } else if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Compares the observed logit change of gradient descent with the kernel
/// prediction
///
/// ```text
/// dz(x)/dt = −E_{(x',y')}[ K(x, x') (σ(z') − e_{y'}) ]
/// ```
///
/// The expectation runs over the whole of `data`, and every training input
/// is a probe. Each of `steps` iterations predicts the velocity from the
/// current empirical kernel, takes one full-batch SGD step with rate `eta`
/// on the mean paired loss, and compares with `(z_new − z_old)/eta`. The
/// network is updated in place.
pub fn dynamics_check(
    net: &mut TinyNetwork,
    data: &Dataset,
    objective: &TransformConfig,
    eta: f64,
    steps: usize,
) -> Result<DynamicsReport> {
    objective.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = data.len();
    let d = net.output_dim();
    let mut opt = Optimizer::new(OptimizerConfig::sgd(eta, steps))?;
    let mut probes = Vec::with_capacity(n * steps);

    for step in 0..steps {
        let logits = net.forward_batch(data.inputs.view())?;
        let sens = data
            .inputs
            .outer_iter()
            .map(|x| net.output_sensitivities(x.as_slice().expect("contiguous input")))
            .collect::<Result<Vec<_>>>()?;
        let residuals = logits
            .outer_iter()
            .zip(&data.labels)
            .map(|(z, &y)| paired_loss(objective, z.as_slice().unwrap(), y).map(|r| r.gradient))
            .collect::<Result<Vec<_>>>()?;

        let mut predicted = vec![vec![0.0; d]; n];
        let mut diag_eigs = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                let k = kernel_from_sensitivities(&sens[i], &sens[j]);
                if i == j {
                    diag_eigs[i] = min_eigenvalue(&k);
                }
                let kr = k.dot(&ndarray::ArrayView1::from(&residuals[j]));
                predicted[i].iter_mut().zip(kr.iter()).for_each(|(p, v)| *p -= v / n as f64);
            }
        }

        let (_, grads, _) = net.loss_and_grad(data.inputs.view(), &data.labels, objective)?;
        opt.step(net, &grads)?;
        let after = net.forward_batch(data.inputs.view())?;

        for i in 0..n {
            let observed: Vec<f64> = after.row(i).iter().zip(logits.row(i)).map(|(a, b)| (a - b) / eta).collect();
            let pn = predicted[i].iter().map(|x| x * x).sum::<f64>().sqrt();
            let on = observed.iter().map(|x| x * x).sum::<f64>().sqrt();
            let diff = observed.iter().zip(&predicted[i]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            probes.push(ProbeReport {
                step,
                probe: i,
                cosine: cosine(&predicted[i], &observed),
                rel_error: if pn > 0.0 { diff / pn } else { diff },
                predicted_norm: pn,
                observed_norm: on,
                kernel_min_eig: diag_eigs[i],
            });
        }
    }

    let count = probes.len().max(1) as f64;
    Ok(DynamicsReport {
        transform: objective.label(),
        width: net.widths()[1..net.widths().len() - 1].iter().copied().max().unwrap_or(0),
        eta,
        min_cosine: probes.iter().map(|p| p.cosine).fold(f64::INFINITY, f64::min),
        mean_cosine: probes.iter().map(|p| p.cosine).sum::<f64>() / count,
        mean_rel_error: probes.iter().map(|p| p.rel_error).sum::<f64>() / count,
        min_kernel_eig: probes.iter().map(|p| p.kernel_min_eig).fold(f64::INFINITY, f64::min),
        probes,
    })
}

pub fn write_probes_csv<W: std::io::Write>(reports: &[DynamicsReport], w: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["transform", "width", "eta", "step", "probe", "cosine", "rel_error", "predicted_norm", "observed_norm", "kernel_min_eig"])?;
    for r in reports {
        for p in &r.probes {
            csv.write_record([
                r.transform.clone(),
                r.width.to_string(),
                r.eta.to_string(),
                p.step.to_string(),
                p.probe.to_string(),
                p.cosine.to_string(),
                p.rel_error.to_string(),
                p.predicted_norm.to_string(),
                p.observed_norm.to_string(),
                p.kernel_min_eig.to_string(),
            ])?;
        }
    }
    csv.flush()?;
    Ok(())
}
