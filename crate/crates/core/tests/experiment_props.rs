use arelu::calibration::calibrate_tau;
use arelu::experiments::tasks::TauChoice;
use arelu::experiments::{empirical_ntk, empty_sequence_rate, sparsity_histogram, CopyTaskConfig};
use arelu::nnet::{Activation, CopyTask, OptimizerConfig, SequenceTrainConfig, TinyNetwork};
use arelu::{TransformConfig, TransformKind};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn calibration_ignores_row_order(
        rows in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 6), 1..12),
        rotate in 0usize..12,
    ) {
        let a = calibrate_tau(rows.iter().map(|r| r.as_slice()), 1.5).unwrap();
        let mut shuffled = rows.clone();
        shuffled.rotate_left(rotate % rows.len());
        shuffled.reverse();
        let b = calibrate_tau(shuffled.iter().map(|r| r.as_slice()), 1.5).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn zero_fractions_stay_in_unit_interval(
        rows in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 8), 1..20),
        tau in -0.5..0.5f64,
    ) {
        for cfg in [TransformConfig::softmax(), TransformConfig::sparsemax(), TransformConfig::entmax15(), TransformConfig::arelu(1.5, tau)] {
            let stats = sparsity_histogram(&cfg, rows.iter().map(|r| r.as_slice()), 10).unwrap();
            prop_assert!(stats.zero_fractions.iter().all(|f| (0.0..=1.0).contains(f)));
            prop_assert_eq!(stats.histogram.iter().map(|b| b.count).sum::<usize>(), rows.len());
        }
    }

    #[test]
    fn kernel_is_psd(seed in 0u64..1000) {
        let net = TinyNetwork::new(&[4, 32, 3], Activation::Relu, seed).unwrap();
        let x = [0.5, -1.0, 0.25, 2.0];
        let k = empirical_ntk(&net, &x, &x).unwrap();
        prop_assert!(k.min_eigenvalue() >= -1e-9);
        for i in 0..3 {
            for j in 0..3 {
                prop_assert!((k.entries[[i, j]] - k.entries[[j, i]]).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn empty_sequence_rate_is_a_percentage() {
    let cfg = CopyTaskConfig {
        task: CopyTask { vocab: 12, min_len: 2, max_len: 4 },
        train_size: 40,
        dev_size: 10,
        embed_dim: 8,
        hidden: 16,
        train: SequenceTrainConfig { optimizer: OptimizerConfig::adam(0.02, 20), batch_size: 8, log_every: 10, seed: 0 },
        ..CopyTaskConfig::default()
    };
    for kind in [TransformKind::Softmax, TransformKind::Entmax15Sorted, TransformKind::Arelu] {
        let run = cfg.run(kind, TauChoice::Calibrate, 3).unwrap();
        let report = empty_sequence_rate(&run.model, &run.dev, &run.objective, 3).unwrap();
        assert!((0.0..=100.0).contains(&report.rate_pct));
        assert_eq!(report.examples, 10);
        assert!(report.empty_preferred <= report.examples);
    }
}
