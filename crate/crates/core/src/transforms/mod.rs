//! Logit-to-weight transformations.
//!
//! Every map here sends a finite logit vector to a nonnegative weight
//! vector. softmax, sparsemax and entmax produce probability distributions;
//! α-ReLU only guarantees nonnegativity and may return all zeros.

pub mod kernels;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entropic index used when none is given.
pub const DEFAULT_ALPHA: f64 = 1.5;

/// Tolerance on `Σ p = 1` for normalized outputs.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Softmax,
    Sparsemax,
    Entmax15Sorted,
    EntmaxBisect,
    Arelu,
}

impl TransformKind {
    pub const ALL: [TransformKind; 5] = [
        TransformKind::Softmax,
        TransformKind::Sparsemax,
        TransformKind::Entmax15Sorted,
        TransformKind::EntmaxBisect,
        TransformKind::Arelu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransformKind::Softmax => "softmax",
            TransformKind::Sparsemax => "sparsemax",
            TransformKind::Entmax15Sorted => "entmax15_sorted",
            TransformKind::EntmaxBisect => "entmax_bisect",
            TransformKind::Arelu => "arelu",
        }
    }

    /// Whether the output is a probability distribution.
    pub fn is_normalized(self) -> bool {
        !matches!(self, TransformKind::Arelu)
    }
}

impl std::fmt::Display for TransformKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(TransformKind::Softmax),
            "sparsemax" => Ok(TransformKind::Sparsemax),
            "entmax15_sorted" | "entmax15" | "entmax" => Ok(TransformKind::Entmax15Sorted),
            "entmax_bisect" => Ok(TransformKind::EntmaxBisect),
            "arelu" => Ok(TransformKind::Arelu),
            other => Err(Error::config(format!("unknown transform `{other}`"))),
        }
    }
}

/// Transform kind plus its parameters.
///
/// `alpha` is ignored by softmax and fixed to 2 for sparsemax; `tau` is only
/// read by α-ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformConfig {
    pub kind: TransformKind,
    pub alpha: f64,
    pub tau: f64,
}

impl TransformConfig {
    pub fn softmax() -> Self {
        Self { kind: TransformKind::Softmax, alpha: 1.0, tau: 0.0 }
    }

    pub fn sparsemax() -> Self {
        Self { kind: TransformKind::Sparsemax, alpha: 2.0, tau: 0.0 }
    }

    pub fn entmax15() -> Self {
        Self { kind: TransformKind::Entmax15Sorted, alpha: 1.5, tau: 0.0 }
    }

    pub fn entmax(alpha: f64) -> Self {
        Self { kind: TransformKind::EntmaxBisect, alpha, tau: 0.0 }
    }

    pub fn arelu(alpha: f64, tau: f64) -> Self {
        Self { kind: TransformKind::Arelu, alpha, tau }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            TransformKind::Softmax => Ok(()),
            TransformKind::Sparsemax => Ok(()),
            TransformKind::Entmax15Sorted if self.alpha != 1.5 => Err(Error::config(format!(
                "entmax15_sorted requires alpha = 1.5, got {}",
                self.alpha
            ))),
            _ => {
                check_alpha(self.alpha)?;
                if !self.tau.is_finite() {
                    return Err(Error::config(format!("tau must be finite, got {}", self.tau)));
                }
                Ok(())
            }
        }
    }

    /// Applies the configured transform.
    pub fn apply(&self, z: &[f64]) -> Result<WeightVector> {
        self.validate()?;
        check_logits(z)?;
        let mut out = vec![0.0; z.len()];
        self.apply_into(z, &mut out);
        Ok(WeightVector { values: out, normalized: self.kind.is_normalized() })
    }

    /// Unchecked variant for inner loops; `z` and `out` must have equal
    /// length and `self` must be valid.
    pub fn apply_into(&self, z: &[f64], out: &mut [f64]) {
        let mut scratch = Vec::new();
        match self.kind {
            TransformKind::Softmax => kernels::softmax_into(z, out),
            TransformKind::Sparsemax => {
                kernels::sparsemax_into(z, out, &mut scratch);
            }
            TransformKind::Entmax15Sorted => {
                kernels::entmax15_into(z, out, &mut scratch);
            }
            TransformKind::EntmaxBisect => {
                kernels::entmax_bisect_into(z, self.alpha, out);
            }
            TransformKind::Arelu => kernels::arelu_into(z, self.alpha, self.tau, out),
        }
    }

    /// Short label such as `arelu(1.5,0.33)`.
    pub fn label(&self) -> String {
        match self.kind {
            TransformKind::Softmax | TransformKind::Sparsemax | TransformKind::Entmax15Sorted => {
                self.kind.name().to_string()
            }
            TransformKind::EntmaxBisect => format!("entmax({})", self.alpha),
            TransformKind::Arelu => format!("arelu({},{})", self.alpha, self.tau),
        }
    }
}

impl Default for TransformConfig {
    fn default() -> Self {
        Self::entmax15()
    }
}

/// Nonnegative weights produced by a transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    values: Vec<f64>,
    normalized: bool,
}

impl WeightVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Number of entries that are exactly zero.
    pub fn zeros(&self) -> usize {
        self.values.iter().filter(|&&p| p == 0.0).count()
    }

    pub fn zero_fraction(&self) -> f64 {
        self.zeros() as f64 / self.values.len() as f64
    }

    /// One-hot `e_y` of dimension `dim`.
    pub fn one_hot(dim: usize, y: usize) -> Result<Self> {
        check_label(y, dim)?;
        let mut values = vec![0.0; dim];
        values[y] = 1.0;
        Ok(Self { values, normalized: true })
    }
}

impl AsRef<[f64]> for WeightVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Weights of a normalized transform together with the threshold `τ(z)`
/// that solves `Σ_j [(α−1)z_j − τ]_+^{1/(α−1)} = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdResult {
    pub weights: WeightVector,
    pub threshold: f64,
}

pub(crate) fn check_logits(z: &[f64]) -> Result<()> {
    if z.is_empty() {
        return Err(Error::EmptyInput);
    }
    match z.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { index, value: z[index] }),
        None => Ok(()),
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("alpha must be a finite number > 1, got {alpha}")))
    }
}

pub(crate) fn check_label(y: usize, dim: usize) -> Result<()> {
    if y < dim {
        Ok(())
    } else {
        Err(Error::LabelOutOfRange { label: y, dim })
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(z: &[f64]) -> Result<WeightVector> {
    TransformConfig::softmax().apply(z)
}

/// α-entmax for any α > 1, solving for the threshold by bisection.
pub fn entmax_bisect(z: &[f64], alpha: f64) -> Result<ThresholdResult> {
    check_alpha(alpha)?;
    check_logits(z)?;
    let mut out = vec![0.0; z.len()];
    let (threshold, _) = kernels::entmax_bisect_into(z, alpha, &mut out);
    Ok(ThresholdResult { weights: WeightVector { values: out, normalized: true }, threshold })
}

/// Exact 1.5-entmax by sorting.
pub fn entmax15_sorted(z: &[f64]) -> Result<ThresholdResult> {
    check_logits(z)?;
    let mut out = vec![0.0; z.len()];
    let threshold = kernels::entmax15_into(z, &mut out, &mut Vec::with_capacity(z.len()));
    Ok(ThresholdResult { weights: WeightVector { values: out, normalized: true }, threshold })
}

/// Euclidean projection of `z` onto the probability simplex.
pub fn sparsemax(z: &[f64]) -> Result<ThresholdResult> {
    check_logits(z)?;
    let mut out = vec![0.0; z.len()];
    let threshold = kernels::sparsemax_into(z, &mut out, &mut Vec::with_capacity(z.len()));
    Ok(ThresholdResult { weights: WeightVector { values: out, normalized: true }, threshold })
}

/// Exact α-entmax: sorted solvers for α ∈ {1.5, 2}, bisection otherwise.
pub fn entmax(z: &[f64], alpha: f64) -> Result<ThresholdResult> {
    if alpha == 1.5 {
        entmax15_sorted(z)
    } else if alpha == 2.0 {
        sparsemax(z)
    } else {
        entmax_bisect(z, alpha)
    }
}

/// α-ReLU with the constant threshold `cfg.tau`.
///
/// Only `cfg.alpha` and `cfg.tau` are read; the kind is not checked so that
/// an entmax config can be reused with a borrowed threshold.
pub fn arelu(z: &[f64], cfg: &TransformConfig) -> Result<WeightVector> {
    TransformConfig::arelu(cfg.alpha, cfg.tau).apply(z)
}

/// Diagonal of the Jacobian of [`arelu`] at `z`.
pub fn arelu_jacobian_diag(z: &[f64], cfg: &TransformConfig) -> Result<Vec<f64>> {
    TransformConfig::arelu(cfg.alpha, cfg.tau).validate()?;
    check_logits(z)?;
    let mut out = vec![0.0; z.len()];
    kernels::arelu_jacobian_diag_into(z, cfg.alpha, cfg.tau, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert_abs_diff_eq!(x, y, epsilon = tol);
        }
    }

    /// Residual of the normalization equation at `tau`, evaluated directly.
    fn residual(z: &[f64], alpha: f64, tau: f64) -> f64 {
        z.iter()
            .map(|&x| {
                let u = (alpha - 1.0) * x - tau;
                if u > 0.0 {
                    u.powf(1.0 / (alpha - 1.0))
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            - 1.0
    }

    #[test]
    fn softmax_examples() {
        assert_close(softmax(&[0.0, 0.0, 0.0]).unwrap().values(), &[1.0 / 3.0; 3], 1e-15);
        assert_close(softmax(&[2f64.ln(), 0.0]).unwrap().values(), &[2.0 / 3.0, 1.0 / 3.0], 1e-15);
        let p = softmax(&[1000.0, 0.0]).unwrap();
        assert_eq!(p.values()[0], 1.0);
        assert!(p.values()[1].is_finite() && p.values()[1] >= 0.0);
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(matches!(softmax(&[0.0, f64::NAN]), Err(Error::NonFinite { index: 1, .. })));
        assert!(matches!(sparsemax(&[f64::INFINITY]), Err(Error::NonFinite { index: 0, .. })));
        assert!(matches!(entmax15_sorted(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn entmax_bisect_examples() {
        for t in [-3.0, 0.0, 0.7, 12.0] {
            let r = entmax_bisect(&[t, t], 1.5).unwrap();
            assert_close(r.weights.values(), &[0.5, 0.5], 1e-12);
            // (0.5t − τ)²·2 = 1
            assert_abs_diff_eq!(r.threshold, 0.5 * t - 0.5f64.sqrt(), epsilon = 1e-10);
            assert!(residual(&[t, t], 1.5, r.threshold).abs() <= 1e-8);
        }
        let r = entmax_bisect(&[2.0, 0.0], 1.5).unwrap();
        assert_close(r.weights.values(), &[1.0, 0.0], 1e-12);
        assert_abs_diff_eq!(r.threshold, 0.0, epsilon = 1e-12);

        let r = entmax_bisect(&[10.0, 0.0, 0.0], 1.5).unwrap();
        assert_eq!(r.weights.values(), &[1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(r.threshold, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn entmax_bisect_rejects_alpha_at_most_one() {
        assert!(matches!(entmax_bisect(&[1.0, 2.0], 1.0), Err(Error::Config(_))));
        assert!(matches!(entmax_bisect(&[1.0, 2.0], 0.5), Err(Error::Config(_))));
    }

    #[test]
    fn entmax15_sorted_examples() {
        let r = entmax15_sorted(&[2.0, 0.0]).unwrap();
        let oracle = entmax_bisect(&[2.0, 0.0], 1.5).unwrap();
        assert_close(r.weights.values(), oracle.weights.values(), 1e-12);
        assert_abs_diff_eq!(r.threshold, oracle.threshold, epsilon = 1e-12);
        assert_close(entmax15_sorted(&[0.0, 0.0]).unwrap().weights.values(), &[0.5, 0.5], 1e-15);
    }

    #[test]
    fn sparsemax_examples() {
        let r = sparsemax(&[0.5, 0.3, 0.1]).unwrap();
        assert_close(r.weights.values(), &[0.8 / 1.5, 0.5 / 1.5, 0.2 / 1.5], 1e-12);
        assert_abs_diff_eq!(r.threshold, (0.9 - 1.0) / 3.0, epsilon = 1e-15);
        let r = sparsemax(&[2.0, 0.0, 0.0]).unwrap();
        assert_eq!(r.weights.values(), &[1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(r.threshold, 1.0, epsilon = 1e-15);
        assert_close(sparsemax(&[-4.2, -4.2]).unwrap().weights.values(), &[0.5, 0.5], 1e-15);
    }

    #[test]
    fn arelu_examples() {
        let cfg = TransformConfig::arelu(1.5, 0.0);
        let p = arelu(&[2.0, 1.0, -1.0], &cfg).unwrap();
        assert_eq!(p.values(), &[1.0, 0.25, 0.0]);
        assert!(!p.is_normalized());

        let p = arelu(&[0.1, -3.0, 0.5], &TransformConfig::arelu(1.5, 1.0)).unwrap();
        assert_eq!(p.values(), &[0.0, 0.0, 0.0]);

        let tau = entmax_bisect(&[2.0, 0.0], 1.5).unwrap().threshold;
        let p = arelu(&[2.0, 0.0], &TransformConfig::arelu(1.5, tau)).unwrap();
        assert_close(p.values(), entmax15_sorted(&[2.0, 0.0]).unwrap().weights.values(), 1e-12);
    }

    #[test]
    fn arelu_rejects_bad_alpha() {
        assert!(arelu(&[1.0], &TransformConfig::arelu(1.0, 0.0)).is_err());
        assert!(arelu(&[1.0], &TransformConfig::arelu(f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn arelu_general_alpha_matches_powf() {
        let z = [0.9, 2.3, -0.4, 1.7];
        let (alpha, tau) = (1.3, 0.1);
        let p = arelu(&z, &TransformConfig::arelu(alpha, tau)).unwrap();
        for (pi, &zi) in p.values().iter().zip(&z) {
            let u: f64 = (alpha - 1.0) * zi - tau;
            let expect = if u > 0.0 { u.powf(1.0 / (alpha - 1.0)) } else { 0.0 };
            assert_abs_diff_eq!(*pi, expect, epsilon = 1e-13);
        }
    }

    fn central_difference(z: &[f64], cfg: &TransformConfig, i: usize, h: f64) -> f64 {
        let mut plus = z.to_vec();
        let mut minus = z.to_vec();
        plus[i] += h;
        minus[i] -= h;
        let a = arelu(&plus, cfg).unwrap().values()[i];
        let b = arelu(&minus, cfg).unwrap().values()[i];
        (a - b) / (2.0 * h)
    }

    #[test]
    fn jacobian_examples() {
        let cfg = TransformConfig::arelu(1.5, 0.0);
        let z = [2.0, 1.0, -1.0];
        let diag = arelu_jacobian_diag(&z, &cfg).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(diag[i], central_difference(&z, &cfg, i, 1e-6), epsilon = 1e-6);
        }
        assert_close(&diag, &[1.0, 0.5, 0.0], 1e-15);

        let diag = arelu_jacobian_diag(&[-1.0, -2.0], &cfg).unwrap();
        assert_eq!(diag, vec![0.0, 0.0]);

        let diag = arelu_jacobian_diag(&[0.5, 3.0, -1.0], &TransformConfig::arelu(2.0, 0.2)).unwrap();
        assert_eq!(diag, vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn jacobian_is_zero_at_kink() {
        let cfg = TransformConfig::arelu(1.5, 0.5);
        assert_eq!(arelu_jacobian_diag(&[1.0], &cfg).unwrap(), vec![0.0]);
    }

    #[test]
    fn config_validation() {
        assert!(TransformConfig { alpha: 1.6, ..TransformConfig::entmax15() }.validate().is_err());
        assert!(TransformConfig::softmax().validate().is_ok());
        assert!(TransformConfig::arelu(1.5, f64::INFINITY).validate().is_err());
        assert_eq!("entmax15_sorted".parse::<TransformKind>().unwrap(), TransformKind::Entmax15Sorted);
        assert!("gumbel".parse::<TransformKind>().is_err());
    }

    #[test]
    fn entmax_dispatch_uses_exact_solvers() {
        let z = [0.2, 1.4, -0.3, 0.9];
        assert_eq!(entmax(&z, 1.5).unwrap(), entmax15_sorted(&z).unwrap());
        assert_eq!(entmax(&z, 2.0).unwrap(), sparsemax(&z).unwrap());
        assert_eq!(entmax(&z, 1.25).unwrap(), entmax_bisect(&z, 1.25).unwrap());
    }
}
