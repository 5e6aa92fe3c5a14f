use arelu::nnet::{gaussian_clusters, train, Activation, ClusterConfig, OptimizerConfig, TinyNetwork, TrainConfig};
use arelu::TransformConfig;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn objectives() -> [TransformConfig; 4] {
    [TransformConfig::softmax(), TransformConfig::sparsemax(), TransformConfig::entmax15(), TransformConfig::arelu(1.5, 0.1)]
}

fn random_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(&mut rng))
}

#[test]
fn backward_matches_finite_differences() {
    let widths = [5, 12, 8, 4];
    let x = random_batch(6, 5, 1);
    let labels = [0, 1, 2, 3, 1, 2];
    for (seed, objective) in objectives().iter().enumerate() {
        let net = TinyNetwork::new(&widths, Activation::Relu, 40 + seed as u64).unwrap();
        let params: usize = net.weights().iter().map(|w| w.len()).sum();
        assert!(params <= 500);
        let (_, grads, _) = net.loss_and_grad(x.view(), &labels, objective).unwrap();

        let loss_at = |weights: Vec<Array2<f64>>| {
            let n = TinyNetwork::from_weights(weights, Activation::Relu).unwrap();
            n.loss_and_grad(x.view(), &labels, objective).unwrap().0
        };
        let h = 1e-6;
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for (k, g) in grads.iter().enumerate() {
            for idx in 0..g.len() {
                let (r, c) = (idx / g.ncols(), idx % g.ncols());
                let mut up = net.weights().to_vec();
                up[k][[r, c]] += h;
                let mut down = net.weights().to_vec();
                down[k][[r, c]] -= h;
                let fd = (loss_at(up) - loss_at(down)) / (2.0 * h);
                num += (fd - g[[r, c]]).powi(2);
                den += fd.powi(2).max(g[[r, c]].powi(2));
            }
        }
        let rel = (num / den).sqrt();
        assert!(rel <= 1e-4, "{}: relative error {rel}", objective.label());
    }
}

#[test]
fn training_is_deterministic() {
    let data = gaussian_clusters(&ClusterConfig { per_class: 8, ..ClusterConfig::default() }, 9).unwrap();
    let cfg = TrainConfig { optimizer: OptimizerConfig::adam(0.01, 30), batch_size: 16, log_every: 5, seed: 4 };
    for objective in objectives() {
        let run = || {
            let mut net = TinyNetwork::new(&[16, 24, 10], Activation::Relu, 2).unwrap();
            let log = train(&mut net, &data, &objective, &cfg).unwrap();
            (log.deterministic_jsonl(), net.weights().to_vec())
        };
        let (a, wa) = run();
        let (b, wb) = run();
        assert_eq!(a, b);
        assert_eq!(wa, wb);
        assert_eq!(a.lines().count(), 6);
    }
}

#[test]
fn initial_output_statistics_are_width_stable() {
    let x = random_batch(200, 16, 77);
    let expected = x.rows().into_iter().map(|r| r.dot(&r)).sum::<f64>() / (200.0 * 32.0);
    for width in [256, 512, 1024, 2048] {
        let mut values = Vec::new();
        for seed in 0..4 {
            let net = TinyNetwork::new(&[16, width, 50], Activation::Relu, seed).unwrap();
            values.extend(net.forward_batch(x.view()).unwrap().iter().copied());
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.1, "width {width}: mean {mean}");
        assert!((var / expected - 1.0).abs() < 0.2, "width {width}: variance {var}, expected {expected}");
    }
}
