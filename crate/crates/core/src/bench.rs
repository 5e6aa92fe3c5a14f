//! Timing harness for the transform kernels.
//!
//! All transforms in one run consume the same pre-generated logit buffer.
//! Warmup runs are discarded, each timed run covers one full batch, and the
//! outputs are folded into a checksum passed through
//! [`std::hint::black_box`] so that no work can be elided.

use std::hint::black_box;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transforms::kernels::{self, Real};
use crate::transforms::TransformKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(Error::config(format!("precision must be f32 or f64, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub kinds: Vec<TransformKind>,
    pub dim: usize,
    pub batch: usize,
    pub iters: usize,
    pub warmup: usize,
    pub precision: Precision,
    /// α for entmax_bisect and arelu.
    pub alpha: f64,
    /// τ for arelu.
    pub tau: f64,
    /// Standard deviation of the generated logits.
    pub logit_scale: f64,
    pub seed: u64,
    /// Worker threads per timed batch; 1 times the kernels single-threaded.
    pub threads: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            kinds: TransformKind::ALL.to_vec(),
            dim: 32_000,
            batch: 512,
            iters: 10,
            warmup: 2,
            precision: Precision::F32,
            alpha: 1.5,
            tau: 0.0,
            logit_scale: 1.0,
            seed: 0,
            threads: 1,
        }
    }
}

/// One CSV row; `checksum` is not part of the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub transform: String,
    pub alpha: f64,
    pub tau: f64,
    pub dim: usize,
    pub batch: usize,
    pub iters: usize,
    pub mean_ns: f64,
    pub p50_ns: f64,
    pub p95_ns: f64,
    #[serde(skip)]
    pub checksum: f64,
    #[serde(skip)]
    pub samples: Vec<f64>,
}

pub const CSV_HEADER: [&str; 9] = ["transform", "alpha", "tau", "dim", "batch", "iters", "mean_ns", "p50_ns", "p95_ns"];

fn effective_alpha(kind: TransformKind, alpha: f64) -> f64 {
    match kind {
        TransformKind::Softmax => 1.0,
        TransformKind::Sparsemax => 2.0,
        TransformKind::Entmax15Sorted => 1.5,
        TransformKind::EntmaxBisect | TransformKind::Arelu => alpha,
    }
}

/// Nearest-rank percentile of a sorted slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn run_rows<F: Real>(kind: TransformKind, alpha: F, tau: F, logits: &[F], dim: usize, out: &mut [F], scratch: &mut Vec<F>) -> f64 {
    let mut check = F::zero();
    for (z, o) in logits.chunks_exact(dim).zip(out.chunks_exact_mut(dim)) {
        match kind {
            TransformKind::Softmax => kernels::softmax_into(z, o),
            TransformKind::Sparsemax => {
                kernels::sparsemax_into(z, o, scratch);
            }
            TransformKind::Entmax15Sorted => {
                kernels::entmax15_into(z, o, scratch);
            }
            TransformKind::EntmaxBisect => {
                kernels::entmax_bisect_into(z, alpha, o);
            }
            TransformKind::Arelu => kernels::arelu_into(z, alpha, tau, o),
        }
        check = check + o[0] + o[dim - 1];
    }
    black_box(check.to_f64())
}

fn time_batch<F: Real>(kind: TransformKind, cfg: &BenchConfig, logits: &[F], out: &mut [F], scratch: &mut [Vec<F>]) -> (f64, f64) {
    let (alpha, tau) = (F::from_f64(effective_alpha(kind, cfg.alpha)), F::from_f64(cfg.tau));
    let dim = cfg.dim;
    let start = Instant::now();
    let check = if cfg.threads <= 1 {
        run_rows(kind, alpha, tau, black_box(logits), dim, out, &mut scratch[0])
    } else {
        let rows_per = cfg.batch.div_ceil(cfg.threads);
        std::thread::scope(|s| {
            let handles: Vec<_> = logits
                .chunks(rows_per * dim)
                .zip(out.chunks_mut(rows_per * dim))
                .zip(scratch.iter_mut())
                .map(|((z, o), sc)| s.spawn(move || run_rows(kind, alpha, tau, black_box(z), dim, o, sc)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("bench worker")).sum()
        })
    };
    (start.elapsed().as_nanos() as f64, check)
}

fn bench_typed<F: Real>(cfg: &BenchConfig) -> Vec<BenchRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let logits: Vec<F> = (0..cfg.dim * cfg.batch)
        .map(|_| F::from_f64(cfg.logit_scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)))
        .collect();
    let mut out = vec![F::zero(); logits.len()];
    let mut scratch: Vec<Vec<F>> = (0..cfg.threads.max(1)).map(|_| Vec::with_capacity(cfg.dim)).collect();

    cfg.kinds
        .iter()
        .map(|&kind| {
            for _ in 0..cfg.warmup {
                time_batch(kind, cfg, &logits, &mut out, &mut scratch);
            }
            let mut checksum = 0.0;
            let mut samples: Vec<f64> = (0..cfg.iters)
                .map(|_| {
                    let (ns, c) = time_batch(kind, cfg, &logits, &mut out, &mut scratch);
                    checksum += c;
                    ns
                })
                .collect();
            let mean = samples.iter().sum::<f64>() / samples.len() as f64;
            let mut sorted = samples.clone();
            sorted.sort_by(f64::total_cmp);
            samples.shrink_to_fit();
            BenchRecord {
                transform: kind.name().to_string(),
                alpha: effective_alpha(kind, cfg.alpha),
                tau: if kind == TransformKind::Arelu { cfg.tau } else { 0.0 },
                dim: cfg.dim,
                batch: cfg.batch,
                iters: cfg.iters,
                mean_ns: mean,
                p50_ns: percentile(&sorted, 0.5),
                p95_ns: percentile(&sorted, 0.95),
                checksum,
                samples,
            }
        })
        .collect()
}

pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRecord>> {
    if cfg.dim < 2 || cfg.batch == 0 || cfg.iters == 0 || cfg.threads == 0 {
        return Err(Error::config("bench needs dim >= 2, batch >= 1, iters >= 1 and threads >= 1"));
    }
    if cfg.kinds.contains(&TransformKind::EntmaxBisect) || cfg.kinds.contains(&TransformKind::Arelu) {
        crate::transforms::check_alpha(cfg.alpha)?;
    }
    Ok(match cfg.precision {
        Precision::F32 => bench_typed::<f32>(cfg),
        Precision::F64 => bench_typed::<f64>(cfg),
    })
}

pub fn write_csv<W: std::io::Write>(records: &[BenchRecord], w: W) -> Result<()> {
    let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    csv.write_record(CSV_HEADER)?;
    for r in records {
        csv.serialize(r)?;
    }
    csv.flush()?;
    Ok(())
}
