//! Per-channel bias correction of quantized weights.
//!
//! Quantization shifts each channel's mean and changes the L2 norm of its
//! deviations. For channel `c` with original weights `W` and quantized `Wq`
//! the correction is the affine update
//!
//! ```text
//! xi_c = ||W - E(W)||_2 / ||Wq - E(Wq)||_2
//! w   <- xi_c * (w + mu_c)          for every w in Wq
//! ```
//!
//! The shift is `mu_c = E(W) / xi_c - E(Wq)`, so that the corrected channel
//! has exactly the original mean as well as the original centered norm.
//! When `xi_c = 1` this is the plain mean gap `E(W) - E(Wq)`.

use serde::{Deserialize, Serialize};

use crate::distributions::mean;
use crate::error::{Error, Result};
use crate::quantizer::ChannelTensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionTerms {
    pub mu: Vec<f64>,
    pub xi: Vec<f64>,
}

impl CorrectionTerms {
    pub fn identity(channels: usize) -> Self {
        Self {
            mu: vec![0.0; channels],
            xi: vec![1.0; channels],
        }
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
}

fn centered_norm(xs: &[f64], m: f64) -> f64 {
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>().sqrt()
}

/// `(mu, xi)` for one channel. A constant quantized channel yields `xi = 1`
/// and a pure mean shift.
pub fn channel_terms(original: &[f64], quantized: &[f64]) -> Result<(f64, f64)> {
    if original.len() != quantized.len() {
        return Err(Error::ShapeMismatch(format!(
            "channel lengths {} and {}",
            original.len(),
            quantized.len()
        )));
    }
    let (mo, mq) = (mean(original)?, mean(quantized)?);
    let denom = centered_norm(quantized, mq);
    let xi = if denom > 0.0 {
        centered_norm(original, mo) / denom
    } else {
        1.0
    };
    Ok((mo / xi - mq, xi))
}

pub fn correction_terms(original: &ChannelTensor, quantized: &ChannelTensor) -> Result<CorrectionTerms> {
    if !original.same_layout(quantized) {
        return Err(Error::ShapeMismatch(format!(
            "original {:?} (axis {}) vs quantized {:?} (axis {})",
            original.shape(),
            original.channel_axis(),
            quantized.shape(),
            quantized.channel_axis()
        )));
    }
    let (mu, xi) = original
        .iter_channels()
        .zip(quantized.iter_channels())
        .map(|(o, q)| channel_terms(o, q))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    Ok(CorrectionTerms { mu, xi })
}

pub fn apply_channel(quantized: &[f64], mu: f64, xi: f64) -> Vec<f64> {
    quantized.iter().map(|w| xi * (w + mu)).collect()
}

pub fn apply_correction(quantized: &ChannelTensor, terms: &CorrectionTerms) -> Result<ChannelTensor> {
    if terms.mu.len() != quantized.channels() || terms.xi.len() != quantized.channels() {
        return Err(Error::ShapeMismatch(format!(
            "{} channels, {} correction terms",
            quantized.channels(),
            terms.mu.len()
        )));
    }
    let data = quantized
        .iter_channels()
        .enumerate()
        .flat_map(|(c, ch)| apply_channel(ch, terms.mu[c], terms.xi[c]))
        .collect();
    quantized.with_data(data)
}

/// Folds `(mu, xi)` into an affine reconstruction `w = scale * code + offset`.
pub fn fold_correction(scale: f64, offset: f64, mu: f64, xi: f64) -> (f64, f64) {
    (xi * scale, xi * (offset + mu))
}
