use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::{zeros_like, Parameters};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub steps: usize,
}

impl OptimizerConfig {
    pub fn sgd(lr: f64, steps: usize) -> Self {
        Self { kind: OptimizerKind::Sgd, lr, steps, ..Self::adam(lr, steps) }
    }

    /// Adam with β1 = 0.9, β2 = 0.998.
    pub fn adam(lr: f64, steps: usize) -> Self {
        Self { kind: OptimizerKind::Adam, lr, beta1: 0.9, beta2: 0.998, eps: 1e-8, steps }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.kind == OptimizerKind::Adam {
            for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
                if !(0.0..1.0).contains(&b) || b == 0.0 {
                    return Err(Error::config(format!("{name} must lie in (0, 1), got {b}")));
                }
            }
        }
        Ok(())
    }
}

/// Optimizer state; moment buffers are created on the first step.
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    t: i32,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, t: 0, m: Vec::new(), v: Vec::new() })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }

    pub fn step<P: Parameters + ?Sized>(&mut self, model: &mut P, grads: &[Array2<f64>]) -> Result<()> {
        let mut params = model.params_mut();
        if params.len() != grads.len() {
            return Err(Error::Shape { expected: params.len(), got: grads.len() });
        }
        for (p, g) in params.iter().zip(grads) {
            if p.dim() != g.dim() {
                return Err(Error::Shape { expected: p.len(), got: g.len() });
            }
        }
        self.t += 1;
        let lr = self.cfg.lr;
        match self.cfg.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    p.scaled_add(-lr, g);
                }
            }
            OptimizerKind::Adam => {
                if self.m.is_empty() {
                    let shapes: Vec<&Array2<f64>> = params.iter().map(|p| &**p).collect();
                    self.m = zeros_like(&shapes);
                    self.v = zeros_like(&shapes);
                }
                let OptimizerConfig { beta1, beta2, eps, .. } = self.cfg;
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
                    Zip::from(&mut **p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    struct One(Array2<f64>);

    impl Parameters for One {
        fn params(&self) -> Vec<&Array2<f64>> {
            vec![&self.0]
        }
        fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        for cfg in [OptimizerConfig::sgd(0.1, 1), OptimizerConfig::adam(0.1, 1)] {
            let mut model = One(array![[1.0, -2.0], [0.5, 3.0]]);
            let before = model.0.clone();
            let mut opt = Optimizer::new(cfg).unwrap();
            opt.step(&mut model, &[Array2::zeros((2, 2))]).unwrap();
            assert_eq!(model.0, before);
        }
    }

    #[test]
    fn sgd_unit_rate_subtracts_gradient() {
        let mut model = One(array![[1.0, -2.0]]);
        let g = array![[0.25, 4.0]];
        Optimizer::new(OptimizerConfig::sgd(1.0, 1)).unwrap().step(&mut model, &[g]).unwrap();
        assert_eq!(model.0, array![[0.75, -6.0]]);
    }

    #[test]
    fn adam_two_steps_match_hand_unroll() {
        let cfg = OptimizerConfig::adam(0.01, 2);
        let g = 0.3;
        let mut model = One(array![[1.0]]);
        let mut opt = Optimizer::new(cfg).unwrap();
        opt.step(&mut model, &[array![[g]]]).unwrap();
        opt.step(&mut model, &[array![[g]]]).unwrap();

        let (b1, b2, eps, lr) = (0.9f64, 0.998f64, 1e-8, 0.01);
        let mut theta = 1.0;
        let m1 = (1.0 - b1) * g;
        let v1 = (1.0 - b2) * g * g;
        theta -= lr * (m1 / (1.0 - b1)) / ((v1 / (1.0 - b2)).sqrt() + eps);
        let m2 = b1 * m1 + (1.0 - b1) * g;
        let v2 = b2 * v1 + (1.0 - b2) * g * g;
        theta -= lr * (m2 / (1.0 - b1 * b1)) / ((v2 / (1.0 - b2 * b2)).sqrt() + eps);
        assert_abs_diff_eq!(model.0[[0, 0]], theta, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(Optimizer::new(OptimizerConfig::sgd(0.0, 1)).is_err());
        assert!(Optimizer::new(OptimizerConfig::sgd(-1.0, 1)).is_err());
        assert!(Optimizer::new(OptimizerConfig { beta2: 1.0, ..OptimizerConfig::adam(0.1, 1) }).is_err());
    }

    #[test]
    fn shape_mismatch() {
        let mut model = One(array![[1.0, 2.0]]);
        let mut opt = Optimizer::new(OptimizerConfig::sgd(1.0, 1)).unwrap();
        assert!(opt.step(&mut model, &[array![[1.0]]]).is_err());
        assert!(opt.step(&mut model, &[]).is_err());
    }
}
