//! Slice kernels shared by the checked API and the benchmark harness.
//!
//! Kernels write into caller-provided buffers and never validate their input;
//! callers are expected to have checked lengths and finiteness already.

use std::cmp::Ordering;
use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;

/// Floating point types the kernels are instantiated for.
pub trait Real: Float + Sum + Debug + Send + Sync + 'static {
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

pub const BISECT_TOL: f64 = 1e-12;
pub const BISECT_MAX_ITER: usize = 100;

/// `x^e` for `x > 0`, and 0 otherwise.
///
/// The clamp is applied before any logarithm is taken. Exponents 1 and 2
/// (α = 2 and α = 1.5) take exact fast paths.
#[inline(always)]
pub fn pos_pow<F: Real>(x: F, exponent: F) -> F {
    if x <= F::zero() {
        return F::zero();
    }
    let one = F::one();
    if exponent == one {
        x
    } else if exponent == one + one {
        x * x
    } else {
        (x.ln() * exponent).exp()
    }
}

#[inline]
fn max_of<F: Real>(z: &[F]) -> F {
    z.iter().copied().fold(F::neg_infinity(), F::max)
}

#[inline]
fn descending<F: Real>(a: &F, b: &F) -> Ordering {
    b.partial_cmp(a).unwrap_or(Ordering::Equal)
}

pub fn softmax_into<F: Real>(z: &[F], out: &mut [F]) {
    let max = max_of(z);
    let mut sum = F::zero();
    for (o, &x) in out.iter_mut().zip(z) {
        let e = (x - max).exp();
        *o = e;
        sum = sum + e;
    }
    let inv = sum.recip();
    for o in out.iter_mut() {
        *o = *o * inv;
    }
}

/// Writes `[(α−1)z_i − τ]_+^{1/(α−1)}` into `out`.
pub fn arelu_into<F: Real>(z: &[F], alpha: F, tau: F, out: &mut [F]) {
    let scale = alpha - F::one();
    let exponent = scale.recip();
    let two = F::one() + F::one();
    if exponent == two {
        // α = 1.5
        for (o, &x) in out.iter_mut().zip(z) {
            let u = (scale * x - tau).max(F::zero());
            *o = u * u;
        }
    } else if exponent == F::one() {
        for (o, &x) in out.iter_mut().zip(z) {
            *o = (x - tau).max(F::zero());
        }
    } else {
        for (o, &x) in out.iter_mut().zip(z) {
            *o = pos_pow(scale * x - tau, exponent);
        }
    }
}

/// Euclidean projection onto the simplex; returns the threshold τ with
/// `out = [z − τ]_+`.
pub fn sparsemax_into<F: Real>(z: &[F], out: &mut [F], scratch: &mut Vec<F>) -> F {
    scratch.clear();
    scratch.extend_from_slice(z);
    scratch.sort_by(descending);

    let one = F::one();
    let mut cumsum = F::zero();
    let mut support_sum = scratch[0];
    let mut support = 1usize;
    for (k, &x) in scratch.iter().enumerate() {
        cumsum = cumsum + x;
        let kf = F::from_f64((k + 1) as f64);
        if one + kf * x > cumsum {
            support = k + 1;
            support_sum = cumsum;
        } else {
            break;
        }
    }
    let tau = (support_sum - one) / F::from_f64(support as f64);
    for (o, &x) in out.iter_mut().zip(z) {
        *o = (x - tau).max(F::zero());
    }
    tau
}

/// Exact 1.5-entmax by sorting; returns τ with `out = [z/2 − τ]_+^2`.
///
/// Works on `(z − max)/2` and tracks the running mean and sum of squared
/// deviations of the sorted prefix with Welford's recursion, which keeps the
/// per-prefix variance accurate for long vectors.
pub fn entmax15_into<F: Real>(z: &[F], out: &mut [F], scratch: &mut Vec<F>) -> F {
    let half = F::from_f64(0.5);
    let max = max_of(z);
    scratch.clear();
    scratch.extend(z.iter().map(|&x| (x - max) * half));
    scratch.sort_by(descending);

    let one = F::one();
    let mut mean = F::zero();
    let mut m2 = F::zero();
    let mut tau_star = scratch[0] - one;
    for (k, &x) in scratch.iter().enumerate() {
        let kf = F::from_f64((k + 1) as f64);
        let delta = x - mean;
        mean = mean + delta / kf;
        m2 = m2 + delta * (x - mean);
        let disc = ((one - m2) / kf).max(F::zero());
        let tau_k = mean - disc.sqrt();
        if tau_k <= x {
            tau_star = tau_k;
        } else {
            break;
        }
    }
    for (o, &x) in out.iter_mut().zip(z) {
        let u = ((x - max) * half - tau_star).max(F::zero());
        *o = u * u;
    }
    tau_star + max * half
}

/// General α-entmax by bisection on the threshold.
///
/// The threshold lies in `[max((α−1)z) − 1, max((α−1)z)]`: at the lower end
/// the largest term alone is 1, at the upper end every term is 0. Returns the
/// threshold and the number of iterations used. The output is rescaled to
/// sum to one.
pub fn entmax_bisect_into<F: Real>(z: &[F], alpha: F, out: &mut [F]) -> (F, usize) {
    let one = F::one();
    let scale = alpha - one;
    let exponent = scale.recip();
    let top = max_of(z) * scale;
    let mut lo = top - one;
    let mut hi = top;
    let tol = F::from_f64(BISECT_TOL);

    let mass = |tau: F| -> F { z.iter().map(|&x| pos_pow(scale * x - tau, exponent)).sum() };

    let mut tau = lo;
    let mut iterations = 0;
    if (mass(lo) - one).abs() > tol {
        while iterations < BISECT_MAX_ITER {
            iterations += 1;
            tau = (lo + hi) * F::from_f64(0.5);
            let residual = mass(tau) - one;
            if residual.abs() <= tol {
                break;
            }
            if residual > F::zero() {
                lo = tau;
            } else {
                hi = tau;
            }
        }
    }

    let mut sum = F::zero();
    for (o, &x) in out.iter_mut().zip(z) {
        *o = pos_pow(scale * x - tau, exponent);
        sum = sum + *o;
    }
    let inv = sum.recip();
    for o in out.iter_mut() {
        *o = *o * inv;
    }
    (tau, iterations)
}

/// Diagonal of the α-ReLU Jacobian: `[(α−1)z_i − τ]_+^{(2−α)/(α−1)}` on the
/// support and 0 elsewhere (including the kink itself).
pub fn arelu_jacobian_diag_into<F: Real>(z: &[F], alpha: F, tau: F, out: &mut [F]) {
    let one = F::one();
    let scale = alpha - one;
    let exponent = (one + one - alpha) / scale;
    for (o, &x) in out.iter_mut().zip(z) {
        let u = scale * x - tau;
        *o = if u > F::zero() {
            if exponent == F::zero() {
                one
            } else {
                pos_pow(u, exponent)
            }
        } else {
            F::zero()
        };
    }
}
