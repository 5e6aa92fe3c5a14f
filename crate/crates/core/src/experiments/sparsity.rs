use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transforms::{check_logits, TransformConfig, TransformKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBucket {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Distribution of per-example zero fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityStats {
    pub zero_fractions: Vec<f64>,
    pub histogram: Vec<HistogramBucket>,
    pub mean: f64,
    pub median: f64,
}

/// Zero fractions of `cfg` applied to each row of `logits`, binned into
/// `buckets` equal-width bins over `[0, 1]` (last bin closed).
///
/// Only exact zeros count. Softmax is reported as having none, even where
/// floating point underflow would produce one.
pub fn sparsity_histogram<'a, I>(cfg: &TransformConfig, logits: I, buckets: usize) -> Result<SparsityStats>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    cfg.validate()?;
    if buckets == 0 {
        return Err(Error::config("histogram needs at least one bucket"));
    }
    let mut fractions = Vec::new();
    let mut out = Vec::new();
    for z in logits {
        check_logits(z)?;
        if cfg.kind == TransformKind::Softmax {
            fractions.push(0.0);
            continue;
        }
        out.resize(z.len(), 0.0);
        cfg.apply_into(z, &mut out);
        fractions.push(out.iter().filter(|&&p| p == 0.0).count() as f64 / z.len() as f64);
    }
    if fractions.is_empty() {
        return Err(Error::EmptyBatch);
    }

    let mut histogram: Vec<HistogramBucket> = (0..buckets)
        .map(|b| HistogramBucket { lo: b as f64 / buckets as f64, hi: (b + 1) as f64 / buckets as f64, count: 0 })
        .collect();
    for &f in &fractions {
        let b = ((f * buckets as f64) as usize).min(buckets - 1);
        histogram[b].count += 1;
    }
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    let mut sorted = fractions.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 { sorted[mid] } else { 0.5 * (sorted[mid - 1] + sorted[mid]) };
    Ok(SparsityStats { zero_fractions: fractions, histogram, mean, median })
}

/// CSV with header `transform,bucket_lo,bucket_hi,count`.
pub fn write_histogram_csv<W: std::io::Write>(rows: &[(String, SparsityStats)], w: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["transform", "bucket_lo", "bucket_hi", "count"])?;
    for (label, stats) in rows {
        for b in &stats.histogram {
            csv.write_record([label.clone(), b.lo.to_string(), b.hi.to_string(), b.count.to_string()])?;
        }
    }
    csv.flush()?;
    Ok(())
}
