//! Histogram / KL-divergence clipping-threshold search, the calibration
//! baseline ACIQ is compared against.
//!
//! The histogram is one-sided: magnitudes `|x|` in equal-width bins over
//! `[0, max|x|]`. For every candidate truncation `i` (from the number of
//! quantization levels up to the bin count) the reference distribution `P`
//! is the first `i` bins with all outlier mass folded into bin `i - 1`. The
//! same bins without the outliers are merged into `levels` chunks and each
//! chunk's mass is spread back uniformly over its non-empty bins, giving
//! `Q`. The candidate with the smallest `KL(P || Q)` wins; ties go to the
//! smaller threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantizer::check_bits;

pub const DEFAULT_BINS: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    edges: Vec<f64>,
    counts: Vec<u64>,
}

impl Histogram {
    pub fn new(edges: Vec<f64>, counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() || edges.len() != counts.len() + 1 {
            return Err(Error::ShapeMismatch(format!(
                "{} edges for {} bins",
                edges.len(),
                counts.len()
            )));
        }
        if edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("edges", "must be strictly increasing"));
        }
        if counts.iter().sum::<u64>() == 0 {
            return Err(Error::EmptyTensor);
        }
        Ok(Self { edges, counts })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn build_histogram(samples: &[f64], n_bins: usize) -> Result<Histogram> {
    if samples.is_empty() {
        return Err(Error::EmptyTensor);
    }
    if n_bins == 0 {
        return Err(Error::invalid("n_bins", "must be at least 1"));
    }
    let max = samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let top = if max > 0.0 { max } else { 1.0 };
    let width = top / n_bins as f64;
    let edges = (0..=n_bins)
        .map(|i| if i == n_bins { top } else { i as f64 * width })
        .collect();
    let mut counts = vec![0u64; n_bins];
    for x in samples {
        let i = ((x.abs() / width) as usize).min(n_bins - 1);
        counts[i] += 1;
    }
    Histogram::new(edges, counts)
}

/// `KL(P || Q)` over unnormalized weights. Bins where `p = 0` contribute
/// nothing; any bin with `p > 0` and `q = 0` makes the divergence infinite.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
    if sq <= 0.0 {
        return f64::INFINITY;
    }
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| {
            let (pn, qn) = (pi / sp, qi / sq);
            if qn > 0.0 { pn * (pn / qn).ln() } else { f64::INFINITY }
        })
        .sum::<f64>()
        .max(0.0)
}

/// Reference and quantized distributions for truncation at bin `i`.
/// `Q` is built from the unfolded counts, so the outlier mass in `P`'s last
/// bin is what distinguishes candidates.
fn candidate(counts: &[u64], i: usize, levels: usize) -> (Vec<f64>, Vec<f64>) {
    let sliced: Vec<f64> = counts[..i].iter().map(|&c| c as f64).collect();
    let mut p = sliced.clone();
    p[i - 1] += counts[i..].iter().map(|&c| c as f64).sum::<f64>();
    let mut q = vec![0.0; i];
    for j in 0..levels {
        let (lo, hi) = (j * i / levels, (j + 1) * i / levels);
        let mass: f64 = sliced[lo..hi].iter().sum();
        let nonzero = sliced[lo..hi].iter().filter(|&&x| x > 0.0).count();
        if nonzero == 0 {
            continue;
        }
        let share = mass / nonzero as f64;
        for k in lo..hi {
            if sliced[k] > 0.0 {
                q[k] = share;
            }
        }
    }
    (p, q)
}

/// Divergence for every candidate truncation, as `(threshold, kl)` pairs in
/// scan order.
pub fn kld_scan(hist: &Histogram, bits: u32) -> Result<Vec<(f64, f64)>> {
    check_bits(bits)?;
    let levels = 1usize << bits;
    let n = hist.bins();
    if n < levels {
        return Err(Error::invalid(
            "hist",
            format!("{n} bins cannot represent {levels} levels"),
        ));
    }
    Ok((levels..=n)
        .map(|i| {
            let (p, q) = candidate(&hist.counts, i, levels);
            (hist.edges[i], kl_divergence(&p, &q))
        })
        .collect())
}

/// Threshold (an upper bin edge) minimizing the KL divergence.
pub fn kld_threshold(hist: &Histogram, bits: u32) -> Result<f64> {
    let scan = kld_scan(hist, bits)?;
    let mut best = scan[0];
    for &(t, kl) in &scan[1..] {
        if kl < best.1 {
            best = (t, kl);
        }
    }
    Ok(best.0)
}
