//! Uniform midpoint quantizer.
//!
//! A [`QuantGrid`] splits the clipping range into equal bins and maps every
//! value to the center of its bin. Bins are half-open `[low, high)` except
//! the last, which also takes the upper end of the range. Values are kept in
//! reconstruction space; no integer codes are materialized.

use serde::{Deserialize, Serialize};

use crate::distributions::mean;
use crate::error::{Error, Result};

pub const MIN_BITS: u32 = 1;
pub const MAX_BITS: u32 = 16;

/// Range layout of a quantizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// `[-alpha, alpha]`, step `2 alpha / levels`.
    #[default]
    Symmetric,
    /// Unsigned `[0, alpha]` for activations fused with a ReLU, step
    /// `alpha / levels`. Non-positive inputs are the ReLU's exact zero and
    /// reconstruct to 0.
    #[serde(rename = "relu")]
    FusedRelu,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Symmetric => "symmetric",
            Mode::FusedRelu => "relu",
        })
    }
}

pub(crate) fn check_bits(bits: u32) -> Result<()> {
    if (MIN_BITS..=MAX_BITS).contains(&bits) {
        Ok(())
    } else {
        Err(Error::BitsOutOfRange(bits))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantGrid {
    alpha: f64,
    levels: u32,
    mode: Mode,
    delta: f64,
}

impl QuantGrid {
    /// Grid with `2^bits` bins.
    pub fn new(alpha: f64, bits: u32, mode: Mode) -> Result<Self> {
        check_bits(bits)?;
        Self::with_levels(alpha, 1 << bits, mode)
    }

    /// Grid with an arbitrary number of bins (used by bin-allocation
    /// experiments where the per-channel count need not be a power of two).
    pub fn with_levels(alpha: f64, levels: u32, mode: Mode) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid("alpha", format!("must be positive, got {alpha}")));
        }
        if levels == 0 {
            return Err(Error::invalid("levels", "must be at least 1"));
        }
        let width = match mode {
            Mode::Symmetric => 2.0 * alpha,
            Mode::FusedRelu => alpha,
        };
        Ok(Self {
            alpha,
            levels,
            mode,
            delta: width / levels as f64,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn low(&self) -> f64 {
        match self.mode {
            Mode::Symmetric => -self.alpha,
            Mode::FusedRelu => 0.0,
        }
    }

    pub fn midpoint(&self, bin: u32) -> f64 {
        self.low() + (2 * bin + 1) as f64 * self.delta / 2.0
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.levels).map(|i| self.midpoint(i)).collect()
    }

    /// Index of the bin holding `x` after clipping to the range.
    pub fn bin_index(&self, x: f64) -> u32 {
        let pos = ((x - self.low()) / self.delta).floor();
        if pos <= 0.0 {
            0
        } else {
            (pos as u64).min(self.levels as u64 - 1) as u32
        }
    }

    pub fn quantize(&self, x: f64) -> f64 {
        quantize(x, self)
    }
}

pub fn make_grid(alpha: f64, bits: u32, mode: Mode) -> Result<QuantGrid> {
    QuantGrid::new(alpha, bits, mode)
}

/// Saturates `x` to `[-alpha, alpha]`.
pub fn clip(x: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::invalid("alpha", format!("must be positive, got {alpha}")));
    }
    Ok(x.clamp(-alpha, alpha))
}

pub fn quantize(x: f64, grid: &QuantGrid) -> f64 {
    if grid.mode == Mode::FusedRelu && x <= 0.0 {
        return 0.0;
    }
    grid.midpoint(grid.bin_index(x))
}

/// Min/max ("naive") quantization of one channel onto `2^bits` evenly
/// spaced levels spanning exactly `[min, max]`, rounding to the nearest
/// level.
///
/// Returns the reconstructed values together with the affine parameters
/// `(scale, offset)` such that every output is `offset + scale * code`.
/// A constant channel is returned unchanged with `scale = 0` and
/// `offset` equal to the constant.
pub fn quantize_minmax_channel(channel: &[f64], bits: u32) -> Result<(Vec<f64>, f64, f64)> {
    check_bits(bits)?;
    if channel.is_empty() {
        return Err(Error::EmptyTensor);
    }
    let (lo, hi) = channel
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if lo == hi {
        return Ok((channel.to_vec(), 0.0, lo));
    }
    let top = ((1u64 << bits) - 1) as f64;
    let scale = (hi - lo) / top;
    let q = channel
        .iter()
        .map(|&x| {
            let code = ((x - lo) / scale).round().clamp(0.0, top);
            lo + scale * code
        })
        .collect();
    Ok((q, scale, lo))
}

/// Mean of `(x - Q(x))^2` over `samples`. In fused-ReLU mode the reference
/// is `max(0, x)`.
pub fn empirical_mse(samples: &[f64], grid: &QuantGrid) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyTensor);
    }
    let relu = grid.mode == Mode::FusedRelu;
    let total: f64 = samples
        .iter()
        .map(|&x| {
            let r = if relu { x.max(0.0) } else { x };
            let e = r - quantize(x, grid);
            e * e
        })
        .sum();
    Ok(total / samples.len() as f64)
}

/// Mean squared difference between two equally long sequences.
pub fn mse_between(reference: &[f64], approx: &[f64]) -> Result<f64> {
    if reference.len() != approx.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} vs {} elements",
            reference.len(),
            approx.len()
        )));
    }
    let sq: Vec<f64> = reference
        .iter()
        .zip(approx)
        .map(|(a, b)| (a - b) * (a - b))
        .collect();
    mean(&sq)
}

/// Real-valued tensor whose channels are stored contiguously: channel `c`
/// occupies `data[c * n .. (c + 1) * n]` with `n = len / channels`.
/// `channel_axis` records which entry of `shape` is the channel dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    shape: Vec<usize>,
    channel_axis: usize,
    data: Vec<f64>,
}

impl ChannelTensor {
    pub fn new(shape: Vec<usize>, channel_axis: usize, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::ShapeMismatch(format!("shape {shape:?} has no elements")));
        }
        if channel_axis >= shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "channel axis {channel_axis} out of range for rank {}",
                shape.len()
            )));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} holds {n} elements, data has {}",
                data.len()
            )));
        }
        Ok(Self {
            shape,
            channel_axis,
            data,
        })
    }

    /// `channels x per_channel` tensor with channel axis 0.
    pub fn from_channels(channels: Vec<Vec<f64>>) -> Result<Self> {
        let per = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != per) {
            return Err(Error::ShapeMismatch("ragged channels".into()));
        }
        let shape = vec![channels.len(), per];
        Self::new(shape, 0, channels.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn channel_axis(&self) -> usize {
        self.channel_axis
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.shape[self.channel_axis]
    }

    pub fn channel_len(&self) -> usize {
        self.data.len() / self.channels()
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.channel_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn iter_channels(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.channel_len())
    }

    /// Same shape and axis, new data.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::new(self.shape.clone(), self.channel_axis, data)
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.shape == other.shape && self.channel_axis == other.channel_axis
    }
}
