use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::error::{Error, Result};
use crate::losses::{paired_loss, LossResult};
use crate::transforms::TransformConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Feedforward network
///
/// ```text
/// h⁽⁰⁾ = x,   z⁽ᵏ⁾ = W⁽ᵏ⁻¹⁾ h⁽ᵏ⁻¹⁾ / √n_{k−1},   h⁽ᵏ⁾ = σ(z⁽ᵏ⁾)
/// ```
///
/// for `k = 1..L−1`, with logits `z = z⁽ᴸ⁾` and no biases. Weights are
/// initialized i.i.d. standard normal.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyNetwork {
    widths: Vec<usize>,
    weights: Vec<Array2<f64>>,
    activation: Activation,
    seed: u64,
}

/// Intermediate values of a batched forward pass.
///
/// `inputs[k]` is `h⁽ᵏ⁾` and `pre[k]` is `z⁽ᵏ⁺¹⁾`, one row per example.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub inputs: Vec<Array2<f64>>,
    pub pre: Vec<Array2<f64>>,
}

impl ForwardTrace {
    pub fn logits(&self) -> &Array2<f64> {
        self.pre.last().expect("network has at least one layer")
    }
}

impl TinyNetwork {
    /// `widths = [n_0, n_1, ..., n_L]` with `n_L` the number of outputs.
    pub fn new(widths: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::config(format!("need at least two positive widths, got {widths:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = widths
            .windows(2)
            .map(|w| Array2::from_shape_simple_fn((w[1], w[0]), || StandardNormal.sample(&mut rng)))
            .collect();
        Ok(Self { widths: widths.to_vec(), weights, activation, seed })
    }

    /// Builds a network from explicit weight matrices (`W⁽ᵏ⁾` has shape
    /// `n_{k+1} × n_k`).
    pub fn from_weights(weights: Vec<Array2<f64>>, activation: Activation) -> Result<Self> {
        let first = weights.first().ok_or_else(|| Error::config("no weight matrices"))?;
        let mut widths = vec![first.ncols()];
        for w in &weights {
            let prev = *widths.last().unwrap();
            if w.ncols() != prev {
                return Err(Error::Shape { expected: prev, got: w.ncols() });
            }
            widths.push(w.nrows());
        }
        Ok(Self { widths, weights, activation, seed: 0 })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn forward_trace(&self, x: ArrayView2<f64>) -> Result<ForwardTrace> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape { expected: self.input_dim(), got: x.ncols() });
        }
        let depth = self.depth();
        let mut inputs = Vec::with_capacity(depth);
        let mut pre = Vec::with_capacity(depth);
        let mut h = x.to_owned();
        for (k, w) in self.weights.iter().enumerate() {
            let z = h.dot(&w.t()) / (self.widths[k] as f64).sqrt();
            inputs.push(h);
            if k + 1 < depth {
                h = z.mapv(|v| self.activation.apply(v));
            } else {
                h = Array2::zeros((0, 0));
            }
            pre.push(z);
        }
        Ok(ForwardTrace { inputs, pre })
    }

    /// Logits for one row per example.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_trace(x)?.pre.pop().unwrap())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self.forward_batch(view)?.into_raw_vec_and_offset().0)
    }

    /// Reverse pass from `dL/dz` (one row per example) to the weight
    /// gradients, summed over the batch.
    pub fn backward_from(&self, trace: &ForwardTrace, seed: &Array2<f64>) -> Vec<Array2<f64>> {
        let depth = self.depth();
        let mut grads = vec![Array2::zeros((0, 0)); depth];
        let mut g = seed.clone();
        for k in (0..depth).rev() {
            let scale = (self.widths[k] as f64).sqrt().recip();
            grads[k] = g.t().dot(&trace.inputs[k]) * scale;
            if k > 0 {
                let mut back = g.dot(&self.weights[k]) * scale;
                back.zip_mut_with(&trace.pre[k - 1], |b, &z| *b *= self.activation.derivative(z));
                g = back;
            }
        }
        grads
    }

    /// Mean paired loss over the batch, its weight gradients and the logits.
    pub fn loss_and_grad(
        &self,
        x: ArrayView2<f64>,
        labels: &[usize],
        objective: &TransformConfig,
    ) -> Result<(f64, Vec<Array2<f64>>, Array2<f64>)> {
        if labels.len() != x.nrows() {
            return Err(Error::Shape { expected: x.nrows(), got: labels.len() });
        }
        if labels.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let trace = self.forward_trace(x)?;
        let logits = trace.logits();
        let n = labels.len() as f64;
        let mut seed = Array2::zeros(logits.raw_dim());
        let mut total = 0.0;
        for ((z, &y), mut s) in logits.outer_iter().zip(labels).zip(seed.outer_iter_mut()) {
            let r = paired_loss(objective, z.as_slice().unwrap(), y)?;
            total += r.value;
            s.iter_mut().zip(&r.gradient).for_each(|(a, b)| *a = b / n);
        }
        let grads = self.backward_from(&trace, &seed);
        Ok((total / n, grads, trace.pre.last().unwrap().clone()))
    }

    /// Loss and exact weight gradients for a single example.
    pub fn backward(&self, x: &[f64], y: usize, objective: &TransformConfig) -> Result<(LossResult, Vec<Array2<f64>>)> {
        let view = ArrayView2::from_shape((1, x.len()), x).map_err(|_| Error::Shape { expected: self.input_dim(), got: x.len() })?;
        let trace = self.forward_trace(view)?;
        let z = trace.logits().row(0).to_vec();
        let r = paired_loss(objective, &z, y)?;
        let seed = Array2::from_shape_vec((1, z.len()), r.gradient.clone()).unwrap();
        Ok((r, self.backward_from(&trace, &seed)))
    }

    /// Per-layer backpropagated output sensitivities at `x`.
    ///
    /// Returns, for each weight matrix `W⁽ᵏ⁾`, the pair `(G, h)` where row `a`
    /// of `G` is `∂z_a/∂z⁽ᵏ⁺¹⁾` and `h = h⁽ᵏ⁾ / √n_k`, so that
    /// `∂z_a/∂W⁽ᵏ⁾ = G[a] ⊗ h`.
    pub fn output_sensitivities(&self, x: &[f64]) -> Result<Vec<(Array2<f64>, Array1<f64>)>> {
        let view = ArrayView2::from_shape((1, x.len()), x).map_err(|_| Error::Shape { expected: self.input_dim(), got: x.len() })?;
        let trace = self.forward_trace(view)?;
        let depth = self.depth();
        let mut out = vec![(Array2::zeros((0, 0)), Array1::zeros(0)); depth];
        let mut g = Array2::eye(self.output_dim());
        for k in (0..depth).rev() {
            let scale = (self.widths[k] as f64).sqrt().recip();
            let h = trace.inputs[k].row(0).to_owned() * scale;
            if k > 0 {
                let mut back = g.dot(&self.weights[k]) * scale;
                let pre = trace.pre[k - 1].row(0);
                for mut row in back.axis_iter_mut(Axis(0)) {
                    row.zip_mut_with(&pre, |b, &z| *b *= self.activation.derivative(z));
                }
                out[k] = (g, h);
                g = back;
            } else {
                out[k] = (g.clone(), h);
            }
        }
        Ok(out)
    }

    /// Full output Jacobian `∂z/∂θ` (`d × P`), parameters flattened layer by
    /// layer in row-major order.
    pub fn output_jacobian(&self, x: &[f64]) -> Result<Array2<f64>> {
        let sens = self.output_sensitivities(x)?;
        let d = self.output_dim();
        let total = self.num_params();
        let mut jac = Array2::zeros((d, total));
        let mut offset = 0;
        for (g, h) in &sens {
            let block = g.ncols() * h.len();
            for a in 0..d {
                let mut dst = jac.slice_mut(ndarray::s![a, offset..offset + block]);
                for (i, &gi) in g.row(a).iter().enumerate() {
                    for (j, &hj) in h.iter().enumerate() {
                        dst[i * h.len() + j] = gi * hj;
                    }
                }
            }
            offset += block;
        }
        Ok(jac)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), &Checkpoint::from(self))?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let ckpt: Checkpoint = serde_json::from_reader(std::io::BufReader::new(file))?;
        ckpt.into_network()
    }
}

impl Parameters for TinyNetwork {
    fn params(&self) -> Vec<&Array2<f64>> {
        self.weights.iter().collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        self.weights.iter_mut().collect()
    }
}

const CHECKPOINT_FORMAT: &str = "arelu-tiny-network";
const CHECKPOINT_VERSION: u32 = 1;

/// On-disk layout: a JSON object with a format tag, a version, the width
/// header, and each weight matrix as a flat row-major array.
#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    widths: Vec<usize>,
    activation: Activation,
    seed: u64,
    weights: Vec<Vec<f64>>,
}

impl From<&TinyNetwork> for Checkpoint {
    fn from(net: &TinyNetwork) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            widths: net.widths.clone(),
            activation: net.activation,
            seed: net.seed,
            weights: net.weights.iter().map(|w| w.iter().copied().collect()).collect(),
        }
    }
}

impl Checkpoint {
    fn into_network(self) -> Result<TinyNetwork> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("{} v{}", self.format, self.version)));
        }
        if self.widths.len() != self.weights.len() + 1 {
            return Err(Error::Checkpoint("width header does not match layer count".into()));
        }
        let weights = self
            .weights
            .into_iter()
            .zip(self.widths.windows(2))
            .map(|(data, w)| {
                Array2::from_shape_vec((w[1], w[0]), data).map_err(|e| Error::Checkpoint(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TinyNetwork { widths: self.widths, weights, activation: self.activation, seed: self.seed })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Straight-line recomputation of the forward recursion with plain loops.
    fn naive_forward(net: &TinyNetwork, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for (k, w) in net.weights().iter().enumerate() {
            let n = h.len() as f64;
            let mut z = vec![0.0; w.nrows()];
            for i in 0..w.nrows() {
                for j in 0..w.ncols() {
                    z[i] += w[[i, j]] * h[j];
                }
                z[i] /= n.sqrt();
            }
            h = if k + 1 < net.depth() { z.iter().map(|v| v.max(0.0)).collect() } else { z };
        }
        h
    }

    #[test]
    fn zero_input_gives_zero_logits() {
        let net = TinyNetwork::new(&[4, 7, 3], Activation::Relu, 3).unwrap();
        assert_eq!(net.forward(&[0.0; 4]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn scaled_identity_reproduces_input() {
        let n = 5;
        let w = Array2::eye(n) * (n as f64).sqrt();
        let net = TinyNetwork::from_weights(vec![w], Activation::Relu).unwrap();
        let x = [0.5, -1.0, 2.0, 0.0, 3.25];
        let z = net.forward(&x).unwrap();
        for (a, b) in z.iter().zip(&x) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn matches_naive_forward() {
        let net = TinyNetwork::new(&[6, 9, 8, 4], Activation::Relu, 11).unwrap();
        let x = [0.1, -0.4, 1.3, 0.7, -2.0, 0.05];
        let a = net.forward(&x).unwrap();
        let b = naive_forward(&net, &x);
        for (p, q) in a.iter().zip(&b) {
            assert_abs_diff_eq!(p, q, epsilon = 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let net = TinyNetwork::new(&[3, 4, 2], Activation::Relu, 0).unwrap();
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(Error::Shape { expected: 3, got: 2 })));
        assert!(TinyNetwork::new(&[3], Activation::Relu, 0).is_err());
        assert!(TinyNetwork::new(&[3, 0, 2], Activation::Relu, 0).is_err());
    }

    #[test]
    fn linear_cross_entropy_gradient_is_outer_product() {
        let net = TinyNetwork::new(&[4, 3], Activation::Identity, 5).unwrap();
        let x = [0.3, -1.0, 0.8, 2.0];
        let (r, grads) = net.backward(&x, 1, &TransformConfig::softmax()).unwrap();
        let z = net.forward(&x).unwrap();
        let p = crate::transforms::softmax(&z).unwrap();
        for i in 0..3 {
            let gi = p.values()[i] - if i == 1 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(gi, r.gradient[i], epsilon = 1e-15);
            for j in 0..4 {
                assert_abs_diff_eq!(grads[0][[i, j]], gi * x[j] / 2.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn seeds_are_deterministic() {
        let a = TinyNetwork::new(&[3, 5, 2], Activation::Relu, 42).unwrap();
        let b = TinyNetwork::new(&[3, 5, 2], Activation::Relu, 42).unwrap();
        let c = TinyNetwork::new(&[3, 5, 2], Activation::Relu, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = TinyNetwork::new(&[3, 5, 2], Activation::Relu, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        net.save_json(&path).unwrap();
        assert_eq!(TinyNetwork::load_json(&path).unwrap(), net);

        let text = std::fs::read_to_string(&path).unwrap().replace("\"version\":1", "\"version\":7");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(TinyNetwork::load_json(&path), Err(Error::Checkpoint(_))));
    }
}
