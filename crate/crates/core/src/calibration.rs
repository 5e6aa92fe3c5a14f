//! Threshold calibration for α-ReLU.
//!
//! τ is set to the mean entmax threshold of a batch of logits produced by the
//! untrained model, so that α-ReLU starts out close to a distribution.

use crate::error::{Error, Result};
use crate::transforms::{check_alpha, entmax_bisect};

/// Mean of the per-row entmax thresholds `τ(z_row)`.
///
/// Thresholds are summed in sorted order, so the result does not depend on
/// the order of the rows. For sequence batches pass one row per token
/// position.
pub fn calibrate_tau<'a, I>(batch: I, alpha: f64) -> Result<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    check_alpha(alpha)?;
    let mut thresholds = batch
        .into_iter()
        .map(|row| entmax_bisect(row, alpha).map(|r| r.threshold))
        .collect::<Result<Vec<_>>>()?;
    if thresholds.is_empty() {
        return Err(Error::EmptyBatch);
    }
    thresholds.sort_by(f64::total_cmp);
    Ok(thresholds.iter().sum::<f64>() / thresholds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rows(v: &[Vec<f64>]) -> impl Iterator<Item = &[f64]> {
        v.iter().map(Vec::as_slice)
    }

    #[test]
    fn identical_rows() {
        let batch = vec![vec![2.0, 0.0]; 5];
        assert_abs_diff_eq!(calibrate_tau(rows(&batch), 1.5).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn tied_rows() {
        let batch = vec![vec![2.0, 2.0]; 3];
        let tau = calibrate_tau(rows(&batch), 1.5).unwrap();
        assert_abs_diff_eq!(tau, 1.0 - 0.5f64.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn mixed_rows() {
        let batch = vec![vec![2.0, 0.0], vec![0.0, 0.0]];
        let tau = calibrate_tau(rows(&batch), 1.5).unwrap();
        assert_abs_diff_eq!(tau, -0.5f64.sqrt() / 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(tau, -0.35355, epsilon = 1e-5);
    }

    #[test]
    fn single_row_equals_its_threshold() {
        let row = vec![0.3, -1.1, 2.2, 0.9];
        let tau = calibrate_tau(std::iter::once(row.as_slice()), 1.5).unwrap();
        assert_eq!(tau, entmax_bisect(&row, 1.5).unwrap().threshold);
    }

    #[test]
    fn errors() {
        assert!(matches!(calibrate_tau(std::iter::empty(), 1.5), Err(Error::EmptyBatch)));
        let batch = vec![vec![1.0]];
        assert!(calibrate_tau(rows(&batch), 1.0).is_err());
    }
}
