use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::nnet::TinyNetwork;

/// Empirical neural tangent kernel `K(x, x') = J_z(x) J_z(x')ᵀ` together
/// with the two parameter Jacobians it was built from.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub entries: Array2<f64>,
    pub jacobian_x: Array2<f64>,
    pub jacobian_x2: Array2<f64>,
}

impl KernelMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Smallest eigenvalue of the symmetric part.
    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.entries)
    }
}

pub fn empirical_ntk(net: &TinyNetwork, x: &[f64], x2: &[f64]) -> Result<KernelMatrix> {
    for v in [x, x2] {
        if v.len() != net.input_dim() {
            return Err(Error::Shape { expected: net.input_dim(), got: v.len() });
        }
    }
    let jacobian_x = net.output_jacobian(x)?;
    let jacobian_x2 = net.output_jacobian(x2)?;
    let entries = jacobian_x.dot(&jacobian_x2.t());
    Ok(KernelMatrix { entries, jacobian_x, jacobian_x2 })
}

pub(crate) type Sensitivities = Vec<(Array2<f64>, Array1<f64>)>;

/// Kernel block from per-layer sensitivities without forming the Jacobians:
/// `Σ_k (G_k Ĝ_kᵀ)·(h_k · ĥ_k)`.
pub(crate) fn kernel_from_sensitivities(a: &Sensitivities, b: &Sensitivities) -> Array2<f64> {
    let d = a[0].0.nrows();
    let mut k = Array2::zeros((d, d));
    for ((ga, ha), (gb, hb)) in a.iter().zip(b) {
        let c = ha.dot(hb);
        if c != 0.0 {
            k.scaled_add(c, &ga.dot(&gb.t()));
        }
    }
    k
}

/// Smallest eigenvalue of `(m + mᵀ)/2`.
pub fn min_eigenvalue(m: &Array2<f64>) -> f64 {
    let n = m.nrows();
    let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[[i, j]] + m[[j, i]]));
    SymmetricEigen::new(sym).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{Activation, Parameters};
    use approx::assert_abs_diff_eq;

    /// Jacobian of the logits by central differences over every weight.
    fn fd_jacobian(net: &TinyNetwork, x: &[f64]) -> Array2<f64> {
        let h = 1e-6;
        let d = net.output_dim();
        let total = net.num_params();
        let mut jac = Array2::zeros((d, total));
        let mut col = 0;
        for layer in 0..net.depth() {
            for idx in 0..net.weights()[layer].len() {
                let mut plus = net.clone();
                let mut minus = net.clone();
                plus.params_mut()[layer].as_slice_mut().unwrap()[idx] += h;
                minus.params_mut()[layer].as_slice_mut().unwrap()[idx] -= h;
                let zp = plus.forward(x).unwrap();
                let zm = minus.forward(x).unwrap();
                for a in 0..d {
                    jac[[a, col]] = (zp[a] - zm[a]) / (2.0 * h);
                }
                col += 1;
            }
        }
        jac
    }

    #[test]
    fn kernel_on_same_input_is_symmetric_psd() {
        let net = TinyNetwork::new(&[5, 16, 16, 4], Activation::Relu, 3).unwrap();
        let x = [0.3, -0.2, 1.0, 0.5, -1.5];
        let k = empirical_ntk(&net, &x, &x).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(k.entries[[i, j]], k.entries[[j, i]], epsilon = 1e-12);
            }
        }
        assert!(k.min_eigenvalue() >= -1e-9);
    }

    #[test]
    fn cross_kernel_transposes() {
        let net = TinyNetwork::new(&[3, 8, 3], Activation::Relu, 1).unwrap();
        let (x, y) = ([0.1, 0.9, -0.4], [1.2, -0.3, 0.0]);
        let kxy = empirical_ntk(&net, &x, &y).unwrap().entries;
        let kyx = empirical_ntk(&net, &y, &x).unwrap().entries;
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(kxy[[i, j]], kyx[[j, i]], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn scalar_output_kernel_is_squared_gradient_norm() {
        let net = TinyNetwork::new(&[4, 6, 1], Activation::Relu, 8).unwrap();
        let x = [0.5, 0.5, -1.0, 2.0];
        let k = empirical_ntk(&net, &x, &x).unwrap();
        assert_eq!(k.dim(), 1);
        let norm2: f64 = k.jacobian_x.iter().map(|g| g * g).sum();
        assert_abs_diff_eq!(k.entries[[0, 0]], norm2, epsilon = 1e-12);
        assert!(k.entries[[0, 0]] >= 0.0);
    }

    #[test]
    fn matches_finite_difference_jacobians() {
        let net = TinyNetwork::new(&[3, 7, 5, 3], Activation::Relu, 12).unwrap();
        let (x, y) = ([0.4, -0.8, 1.1], [-0.2, 0.6, 0.3]);
        let k = empirical_ntk(&net, &x, &y).unwrap();
        let fd = fd_jacobian(&net, &x).dot(&fd_jacobian(&net, &y).t());
        for (a, b) in k.entries.iter().zip(fd.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6 + 1e-4 * b.abs());
        }
    }

    #[test]
    fn factored_route_matches_jacobian_gram() {
        let net = TinyNetwork::new(&[4, 9, 6, 3], Activation::Relu, 21).unwrap();
        let (x, y) = ([0.2, 0.1, -0.7, 1.0], [0.9, -1.1, 0.4, 0.0]);
        let full = empirical_ntk(&net, &x, &y).unwrap().entries;
        let a = net.output_sensitivities(&x).unwrap();
        let b = net.output_sensitivities(&y).unwrap();
        let fact = kernel_from_sensitivities(&a, &b);
        for (p, q) in full.iter().zip(fact.iter()) {
            assert_abs_diff_eq!(p, q, epsilon = 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let net = TinyNetwork::new(&[3, 4, 2], Activation::Relu, 0).unwrap();
        assert!(empirical_ntk(&net, &[1.0], &[1.0, 2.0, 3.0]).is_err());
    }
}
