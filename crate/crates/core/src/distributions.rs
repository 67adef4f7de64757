//! Symmetric prior distributions behind the closed-form noise model.
//!
//! Every analytic result in this crate assumes a zero-mean Laplace or
//! Gaussian tensor. [`DistributionModel`] carries the family, its scale
//! (`b` for Laplace, `sigma` for Gaussian) and the mean that was removed
//! before the analysis.
//!
//! Sampling uses ChaCha8 seeded from a `u64` (`rand_chacha::ChaCha8Rng::seed_from_u64`).
//! Laplace draws use the inverse CDF of a single open-interval uniform;
//! Gaussian draws use the Box-Muller transform, consuming uniforms in pairs
//! and emitting both outputs.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scale substituted for degenerate (constant) channels by callers that
/// cannot skip them.
pub const DEFAULT_SCALE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    #[default]
    Laplace,
    Gaussian,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Laplace => "laplace",
            Family::Gaussian => "gaussian",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionModel {
    family: Family,
    scale: f64,
    mean: f64,
}

impl DistributionModel {
    pub fn new(family: Family, scale: f64, mean: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid("scale", format!("must be positive, got {scale}")));
        }
        if !mean.is_finite() {
            return Err(Error::invalid("mean", "must be finite"));
        }
        Ok(Self { family, scale, mean })
    }

    pub fn laplace(b: f64) -> Result<Self> {
        Self::new(Family::Laplace, b, 0.0)
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::new(Family::Gaussian, sigma, 0.0)
    }

    /// Fits a model to `samples`: the mean, plus the mean absolute deviation
    /// (Laplace) or population standard deviation (Gaussian).
    ///
    /// Returns `Ok(None)` for constant samples, where no positive scale exists.
    pub fn fit(family: Family, samples: &[f64]) -> Result<Option<Self>> {
        let (_, mean) = center(samples)?;
        let scale = match family {
            Family::Laplace => estimate_laplace_b(samples)?,
            Family::Gaussian if samples.len() == 1 => 0.0,
            Family::Gaussian => estimate_gaussian_sigma(samples)?,
        };
        if scale > 0.0 {
            Ok(Some(Self { family, scale, mean }))
        } else {
            Ok(None)
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Same family and scale, mean moved to zero.
    pub fn centered(&self) -> Self {
        Self { mean: 0.0, ..*self }
    }

    /// Same family and mean, scale multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.family, self.scale * factor, self.mean)
    }

    pub fn variance(&self) -> f64 {
        match self.family {
            Family::Laplace => 2.0 * self.scale * self.scale,
            Family::Gaussian => self.scale * self.scale,
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        pdf(self, x)
    }
}

/// Subtracts the arithmetic mean. Returns the centered values and the mean.
pub fn center(samples: &[f64]) -> Result<(Vec<f64>, f64)> {
    let mean = mean(samples)?;
    Ok((samples.iter().map(|x| x - mean).collect(), mean))
}

pub(crate) fn mean(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyTensor);
    }
    Ok(samples.iter().sum::<f64>() / samples.len() as f64)
}

/// Mean absolute deviation around the sample mean, `E|X - E X|`.
///
/// Constant input yields 0; callers must not build a model from it.
pub fn estimate_laplace_b(samples: &[f64]) -> Result<f64> {
    let m = mean(samples)?;
    Ok(samples.iter().map(|x| (x - m).abs()).sum::<f64>() / samples.len() as f64)
}

/// Population standard deviation around the sample mean.
pub fn estimate_gaussian_sigma(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let m = mean(samples)?;
    let var = samples.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / samples.len() as f64;
    Ok(var.sqrt())
}

pub fn pdf(model: &DistributionModel, x: f64) -> f64 {
    let t = x - model.mean;
    let s = model.scale;
    match model.family {
        Family::Laplace => (-t.abs() / s).exp() / (2.0 * s),
        Family::Gaussian => (-(t * t) / (2.0 * s * s)).exp() / ((2.0 * PI).sqrt() * s),
    }
}

/// Draws `n` values from `model`, deterministically for a given `seed`.
pub fn sample(model: &DistributionModel, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mu, s) = (model.mean, model.scale);
    let mut out = Vec::with_capacity(n);
    match model.family {
        Family::Laplace => {
            for _ in 0..n {
                let u = open_uniform(&mut rng) - 0.5;
                out.push(mu - s * u.signum() * (1.0 - 2.0 * u.abs()).ln());
            }
        }
        Family::Gaussian => {
            while out.len() < n {
                let u1 = open_uniform(&mut rng);
                let u2 = open_uniform(&mut rng);
                let r = (-2.0 * u1.ln()).sqrt();
                let theta = 2.0 * PI * u2;
                out.push(mu + s * r * theta.cos());
                if out.len() < n {
                    out.push(mu + s * r * theta.sin());
                }
            }
        }
    }
    Ok(out)
}

/// Uniform on the open interval (0, 1).
fn open_uniform(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Standard normal upper-tail helper used by the Gaussian noise terms:
/// `alpha / (sqrt(2) sigma)`.
pub(crate) fn gauss_arg(alpha: f64, sigma: f64) -> f64 {
    alpha / (SQRT_2 * sigma)
}
