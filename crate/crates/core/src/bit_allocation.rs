//! Per-channel bin allocation under a layer-wide bin quota.
//!
//! Minimizing `sum_i [2 b^2 exp(-alpha_i/b) + alpha_i^2 / (3 B_i^2)]`
//! subject to `sum_i B_i = B` gives `B_i = B * alpha_i^(2/3) / sum_j alpha_j^(2/3)`;
//! bit widths are the rounded base-2 logarithms of those shares.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantizer::check_bits;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationOptions {
    pub min_bits: u32,
    pub max_bits: u32,
    /// Greedily lower bit widths until `sum 2^M_i <= B`.
    pub repair_quota: bool,
}

impl Default for AllocationOptions {
    fn default() -> Self {
        Self {
            min_bits: 1,
            max_bits: 8,
            repair_quota: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitAllocation {
    pub quota_bins: f64,
    pub fractional_bins: Vec<f64>,
    pub bits: Vec<u32>,
    pub alphas: Vec<f64>,
}

impl BitAllocation {
    pub fn used_bins(&self) -> f64 {
        self.bits.iter().map(|&m| (1u64 << m) as f64).sum()
    }

    /// Relative excess (positive) or shortfall (negative) of the rounded
    /// allocation against the quota.
    pub fn quota_drift(&self) -> f64 {
        (self.used_bins() - self.quota_bins) / self.quota_bins
    }
}

fn check_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() {
        return Err(Error::EmptyTensor);
    }
    if let Some(a) = alphas.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
        return Err(Error::invalid("alphas", format!("must be finite and non-negative, got {a}")));
    }
    if alphas.iter().all(|&a| a == 0.0) {
        return Err(Error::DegenerateLayer);
    }
    Ok(())
}

/// Fractional optimal bin counts, proportional to `alpha_i^(2/3)` and
/// summing to `quota`. Zero-range channels receive 0 bins.
pub fn allocate_bins(alphas: &[f64], quota: f64) -> Result<Vec<f64>> {
    check_alphas(alphas)?;
    if !(quota > 0.0 && quota.is_finite()) {
        return Err(Error::invalid("quota", format!("must be positive, got {quota}")));
    }
    let weights: Vec<f64> = alphas.iter().map(|a| a.powf(2.0 / 3.0)).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.iter().map(|w| quota * w / total).collect())
}

/// Integer bit widths for an average of `avg_bits` per channel
/// (quota `B = channels * 2^avg_bits`).
pub fn allocate_bits(alphas: &[f64], avg_bits: u32, opts: &AllocationOptions) -> Result<BitAllocation> {
    check_bits(avg_bits)?;
    check_bits(opts.min_bits)?;
    check_bits(opts.max_bits)?;
    if opts.min_bits > opts.max_bits {
        return Err(Error::invalid("min_bits", "exceeds max_bits"));
    }
    let quota = alphas.len() as f64 * (1u64 << avg_bits) as f64;
    let fractional = allocate_bins(alphas, quota)?;
    let mut bits: Vec<u32> = alphas
        .iter()
        .zip(&fractional)
        .map(|(&a, &b)| {
            if a == 0.0 {
                opts.min_bits
            } else {
                let m = b.log2().round();
                m.clamp(opts.min_bits as f64, opts.max_bits as f64) as u32
            }
        })
        .collect();
    if opts.repair_quota {
        repair(&mut bits, alphas, quota, opts.min_bits);
    }
    Ok(BitAllocation {
        quota_bins: quota,
        fractional_bins: fractional,
        bits,
        alphas: alphas.to_vec(),
    })
}

/// Decrement, one bit at a time, the channel whose rounding noise grows the
/// least, until the rounded allocation fits the quota or every channel is at
/// `min_bits`.
fn repair(bits: &mut [u32], alphas: &[f64], quota: f64, min_bits: u32) {
    let used = |bits: &[u32]| bits.iter().map(|&m| (1u64 << m) as f64).sum::<f64>();
    while used(bits) > quota {
        let cost = |i: usize| {
            let m = bits[i] as i32;
            alphas[i] * alphas[i] / 3.0 * ((4.0f64).powi(-(m - 1)) - (4.0f64).powi(-m))
        };
        let pick = (0..bits.len())
            .filter(|&i| bits[i] > min_bits)
            .min_by(|&i, &j| cost(i).total_cmp(&cost(j)));
        match pick {
            Some(i) => bits[i] -= 1,
            None => break,
        }
    }
}

/// Layer objective with real-valued bin counts and one shared Laplace `b`.
pub fn allocation_mse(alphas: &[f64], bins: &[f64], b: f64) -> Result<f64> {
    allocation_mse_per_channel(alphas, bins, &vec![b; alphas.len()])
}

/// Layer objective with a Laplace scale per channel.
pub fn allocation_mse_per_channel(alphas: &[f64], bins: &[f64], b: &[f64]) -> Result<f64> {
    if alphas.len() != bins.len() || alphas.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} alphas, {} bin counts, {} scales",
            alphas.len(),
            bins.len(),
            b.len()
        )));
    }
    if let Some(x) = bins.iter().find(|x| !(**x > 0.0)) {
        return Err(Error::invalid("bins", format!("must be positive, got {x}")));
    }
    if let Some(x) = b.iter().find(|x| !(**x > 0.0)) {
        return Err(Error::invalid("b", format!("must be positive, got {x}")));
    }
    Ok(alphas
        .iter()
        .zip(bins)
        .zip(b)
        .map(|((&a, &n), &b)| 2.0 * b * b * (-a / b).exp() + a * a / (3.0 * n * n))
        .sum())
}

/// Marginal rounding-noise reduction per extra bin, `2 ln2 alpha^2 / (3 B^3)`.
/// Equal across channels at the optimum (it is the Lagrange multiplier).
pub fn marginal_costs(alphas: &[f64], bins: &[f64]) -> Vec<f64> {
    alphas
        .iter()
        .zip(bins)
        .map(|(a, n)| 2.0 * std::f64::consts::LN_2 * a * a / (3.0 * n * n * n))
        .collect()
}
