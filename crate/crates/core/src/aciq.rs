//! Closed-form expected quantization MSE and the optimal clipping value.
//!
//! The expected error of a clipped uniform quantizer splits into a rounding
//! term over the clipping range and a clipping term over the tails. With the
//! in-range density treated as uniform, the rounding term is `Delta^2 / 12`,
//! i.e. `alpha^2 / (3 * 4^M)` for a symmetric range and `alpha^2 / (24 * 4^M)`
//! for the fused-ReLU range `[0, alpha]` (half the mass, half the step).
//!
//! Tail terms, per tail, are `b^2 exp(-alpha/b)` for Laplace and
//! `(alpha^2 + sigma^2)/2 * erfc(alpha / (sqrt2 sigma)) - alpha sigma phi(alpha)`
//! for Gaussian, with `phi` the `N(0, sigma^2)` density scaled by `sigma^2`.
//!
//! All functions take the model's scale only; the mean is assumed removed.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::distributions::{gauss_arg, DistributionModel, Family};
use crate::error::{Error, Result};
use crate::quantizer::{check_bits, Mode};
use crate::special::erfc;

/// Lower end of the default root bracket, in units of the model scale.
pub const BRACKET_LO: f64 = 1e-3;
/// Initial upper end of the root bracket, in units of the model scale.
pub const BRACKET_HI: f64 = 20.0;
/// The upper end is doubled up to this bound when the derivative is still
/// negative (high bit widths push the optimum past 20 scales).
pub const BRACKET_HI_MAX: f64 = 1280.0;
/// Bisection stops once the bracket is this narrow, in units of scale.
pub const BRACKET_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AciqSetting {
    model: DistributionModel,
    bits: u32,
    mode: Mode,
}

impl AciqSetting {
    pub fn new(model: DistributionModel, bits: u32, mode: Mode) -> Result<Self> {
        check_bits(bits)?;
        Ok(Self { model, bits, mode })
    }

    pub fn laplace(b: f64, bits: u32, mode: Mode) -> Result<Self> {
        Self::new(DistributionModel::laplace(b)?, bits, mode)
    }

    pub fn gaussian(sigma: f64, bits: u32, mode: Mode) -> Result<Self> {
        Self::new(DistributionModel::gaussian(sigma)?, bits, mode)
    }

    pub fn model(&self) -> &DistributionModel {
        &self.model
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn mse(&self, alpha: f64) -> f64 {
        mse(self, alpha)
    }

    pub fn mse_derivative(&self, alpha: f64) -> f64 {
        mse_derivative(self, alpha)
    }

    pub fn optimal_alpha(&self) -> Result<f64> {
        optimal_alpha(self)
    }
}

fn four_pow(bits: u32) -> f64 {
    (4.0f64).powi(bits as i32)
}

/// Rounding noise under the uniform-density approximation.
pub fn rounding_noise_uniform(alpha: f64, bits: u32, mode: Mode) -> f64 {
    match mode {
        Mode::Symmetric => alpha * alpha / (3.0 * four_pow(bits)),
        Mode::FusedRelu => alpha * alpha / (24.0 * four_pow(bits)),
    }
}

/// Rounding noise with the density replaced, bin by bin, by its tangent
/// line at the bin midpoint. The linear part integrates to zero over each
/// symmetric bin, leaving `Delta^3 / 12 * sum_i f(q_i)`.
pub fn rounding_noise_pwl(model: &DistributionModel, alpha: f64, bits: u32) -> f64 {
    let centered = model.centered();
    rounding_noise_pwl_with(|x| centered.pdf(x), alpha, bits)
}

/// [`rounding_noise_pwl`] for an arbitrary density on the symmetric grid.
pub fn rounding_noise_pwl_with(density: impl Fn(f64) -> f64, alpha: f64, bits: u32) -> f64 {
    let levels = 1u64 << bits;
    let delta = 2.0 * alpha / levels as f64;
    let sum: f64 = (0..levels)
        .map(|i| density(-alpha + (2 * i + 1) as f64 * delta / 2.0))
        .sum();
    2.0 * alpha.powi(3) / (3.0 * (2.0f64).powi(3 * bits as i32)) * sum
}

/// Clipping noise of a single tail, `int_alpha^inf f(x) (x - alpha)^2 dx`.
fn tail_noise(model: &DistributionModel, alpha: f64) -> f64 {
    let s = model.scale();
    match model.family() {
        Family::Laplace => s * s * (-alpha / s).exp(),
        Family::Gaussian => {
            let g = (-alpha * alpha / (2.0 * s * s)).exp();
            (alpha * alpha + s * s) / 2.0 * erfc(gauss_arg(alpha, s)) - alpha * s * g / (2.0 * PI).sqrt()
        }
    }
}

/// Clipping noise summed over both tails.
pub fn clip_noise(model: &DistributionModel, alpha: f64) -> f64 {
    2.0 * tail_noise(model, alpha)
}

/// Closed-form total expected MSE at clipping value `alpha`.
pub fn mse(setting: &AciqSetting, alpha: f64) -> f64 {
    let tails = match setting.mode {
        Mode::Symmetric => clip_noise(&setting.model, alpha),
        Mode::FusedRelu => tail_noise(&setting.model, alpha),
    };
    tails + rounding_noise_uniform(alpha, setting.bits, setting.mode)
}

/// Exact derivative of [`mse`] with respect to `alpha`.
pub fn mse_derivative(setting: &AciqSetting, alpha: f64) -> f64 {
    let s = setting.model.scale();
    let rounding = match setting.mode {
        Mode::Symmetric => 2.0 * alpha / (3.0 * four_pow(setting.bits)),
        Mode::FusedRelu => alpha / (12.0 * four_pow(setting.bits)),
    };
    // derivative of one tail
    let tail = match setting.model.family() {
        Family::Laplace => -s * (-alpha / s).exp(),
        Family::Gaussian => {
            let g = (-alpha * alpha / (2.0 * s * s)).exp();
            alpha * erfc(gauss_arg(alpha, s)) - SQRT_2 * s * g / PI.sqrt()
        }
    };
    match setting.mode {
        Mode::Symmetric => 2.0 * tail + rounding,
        Mode::FusedRelu => tail + rounding,
    }
}

/// Clipping value minimizing [`mse`], found by bisection on
/// [`mse_derivative`].
pub fn optimal_alpha(setting: &AciqSetting) -> Result<f64> {
    let s = setting.model.scale();
    let d = |a: f64| mse_derivative(setting, a);
    let lo = BRACKET_LO * s;
    let mut hi = BRACKET_HI * s;
    if d(lo) >= 0.0 {
        return Err(Error::NoOptimumInBracket { lo, hi });
    }
    while d(hi) < 0.0 {
        if hi >= BRACKET_HI_MAX * s {
            return Err(Error::NoOptimumInBracket { lo, hi });
        }
        hi *= 2.0;
    }
    Ok(bisect(d, lo, hi, BRACKET_TOL * s))
}

/// Bisection for a sign change from negative at `lo` to non-negative at
/// `hi`; returns the midpoint of the final bracket.
pub(crate) fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lap(bits: u32) -> AciqSetting {
        AciqSetting::laplace(1.0, bits, Mode::Symmetric).unwrap()
    }

    /// Composite Gauss-Legendre (5 point) on `[a, b]` split into `n` panels.
    fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        const X: [f64; 5] = [
            0.0,
            -0.538_469_310_105_683_1,
            0.538_469_310_105_683_1,
            -0.906_179_845_938_664,
            0.906_179_845_938_664,
        ];
        const W: [f64; 5] = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
            0.236_926_885_056_189_1,
        ];
        let h = (b - a) / n as f64;
        (0..n)
            .map(|k| {
                let (l, r) = (a + k as f64 * h, a + (k + 1) as f64 * h);
                let (m, half) = (0.5 * (l + r), 0.5 * (r - l));
                X.iter().zip(W).map(|(x, w)| w * f(m + half * x)).sum::<f64>() * half
            })
            .sum()
    }

    #[test]
    fn uniform_rounding_values() {
        assert!((rounding_noise_uniform(1.0, 4, Mode::Symmetric) - 1.0 / 768.0).abs() < 1e-18);
        assert!((rounding_noise_uniform(2.0, 2, Mode::Symmetric) - 1.0 / 12.0).abs() < 1e-16);
        assert!((rounding_noise_uniform(1.0, 4, Mode::FusedRelu) - 1.0 / 6144.0).abs() < 1e-18);
    }

    #[test]
    fn pwl_with_uniform_density_is_the_uniform_term() {
        for (alpha, bits) in [(1.0, 4), (2.5, 2), (0.3, 8)] {
            let pwl = rounding_noise_pwl_with(|_| 1.0 / (2.0 * alpha), alpha, bits);
            let uni = rounding_noise_uniform(alpha, bits, Mode::Symmetric);
            assert!(((pwl - uni) / uni).abs() < 1e-12);
        }
    }

    #[test]
    fn pwl_close_to_exact_rounding_integral() {
        for (model, alpha, bits, tol) in [
            (DistributionModel::laplace(1.0).unwrap(), 4.0, 6, 0.01),
            (DistributionModel::gaussian(1.0).unwrap(), 3.0, 8, 0.002),
        ] {
            let levels = 1u32 << bits;
            let delta = 2.0 * alpha / levels as f64;
            let exact: f64 = (0..levels)
                .map(|i| {
                    let lo = -alpha + i as f64 * delta;
                    let q = lo + delta / 2.0;
                    integrate(|x| model.pdf(x) * (x - q) * (x - q), lo, lo + delta, 4)
                })
                .sum();
            let pwl = rounding_noise_pwl(&model, alpha, bits);
            assert!(((pwl - exact) / exact).abs() < tol, "{pwl} vs {exact}");
        }
    }

    #[test]
    fn clip_noise_limits_and_values() {
        let l = DistributionModel::laplace(1.0).unwrap();
        let g = DistributionModel::gaussian(1.0).unwrap();
        assert!((clip_noise(&l, 1e-12) - 2.0).abs() < 1e-9);
        assert!((clip_noise(&g, 1e-12) - 1.0).abs() < 1e-9);
        assert!((clip_noise(&l, 5.03) - 2.0 * (-5.03f64).exp()).abs() < 1e-15);
        assert!((clip_noise(&l, 5.03) - 1.308e-2).abs() < 1e-5);
    }

    #[test]
    fn clip_noise_matches_tail_integral() {
        for model in [
            DistributionModel::laplace(1.3).unwrap(),
            DistributionModel::gaussian(0.7).unwrap(),
        ] {
            let s = model.scale();
            for k in [0.5, 1.0, 2.0, 3.5, 5.0, 7.5, 10.0] {
                let alpha = k * s;
                let upper = alpha + 60.0 * s;
                let num = 2.0 * integrate(|x| model.pdf(x) * (x - alpha).powi(2), alpha, upper, 4000);
                let ana = clip_noise(&model, alpha);
                assert!(((ana - num) / num).abs() < 1e-8, "{model:?} alpha {alpha}: {ana} vs {num}");
            }
        }
    }

    #[test]
    fn mse_examples() {
        let v = mse(&lap(4), 5.03);
        assert!((v - (2.0 * (-5.03f64).exp() + 5.03 * 5.03 / 768.0)).abs() < 1e-15);
        assert!((v - 0.046_03).abs() < 1e-5);
        // grid minimum at 1e-3 resolution lands on 5.03
        let best = (1..=10_000)
            .map(|i| i as f64 * 1e-3)
            .min_by(|a, b| mse(&lap(4), *a).total_cmp(&mse(&lap(4), *b)))
            .unwrap();
        assert!((best - 5.03).abs() <= 1e-3 + 1e-12, "{best}");
        for bits in [1, 4, 16] {
            assert!((mse(&lap(bits), 1e-9) - 2.0).abs() < 1e-8);
        }
        let m2 = lap(2);
        assert!(mse(&m2, 2.83) < mse(&m2, 2.0) && mse(&m2, 2.83) < mse(&m2, 4.0));
    }

    #[test]
    fn relu_forms() {
        let l = AciqSetting::laplace(1.0, 4, Mode::FusedRelu).unwrap();
        assert!((mse(&l, 3.0) - ((-3.0f64).exp() + 9.0 / (24.0 * 256.0))).abs() < 1e-15);
        let g = AciqSetting::gaussian(1.0, 4, Mode::FusedRelu).unwrap();
        let sym = AciqSetting::gaussian(1.0, 4, Mode::Symmetric).unwrap();
        // ReLU clipping term is exactly half the symmetric one
        let a = 2.0;
        let half = (mse(&sym, a) - rounding_noise_uniform(a, 4, Mode::Symmetric)) / 2.0;
        assert!((mse(&g, a) - rounding_noise_uniform(a, 4, Mode::FusedRelu) - half).abs() < 1e-15);
    }

    #[test]
    fn derivative_examples() {
        assert!(mse_derivative(&lap(4), 5.03).abs() <= 2e-3);
        assert!(mse_derivative(&lap(4), 1.0) < 0.0);
        let fd = (mse(&lap(4), 1.0 + 1e-5) - mse(&lap(4), 1.0 - 1e-5)) / 2e-5;
        assert!(fd < 0.0 && (fd - mse_derivative(&lap(4), 1.0)).abs() < 1e-6);
        let g = AciqSetting::gaussian(1.0, 4, Mode::Symmetric).unwrap();
        for i in 1..100 {
            let a = 0.1 * i as f64;
            let fd = (mse(&g, a + 1e-5) - mse(&g, a - 1e-5)) / 2e-5;
            assert!((fd - mse_derivative(&g, a)).abs() < 1e-6, "alpha {a}");
        }
    }

    #[test]
    fn optimal_laplace_constants() {
        for (bits, want) in [(2, 2.83), (3, 3.89), (4, 5.03)] {
            let a = optimal_alpha(&lap(bits)).unwrap();
            assert!((a - want).abs() <= 0.01, "M={bits}: {a}");
        }
        let a = optimal_alpha(&AciqSetting::laplace(3.0, 4, Mode::Symmetric).unwrap()).unwrap();
        assert!((a - 15.09).abs() <= 0.03);
    }

    #[test]
    fn optimal_gaussian_matches_grid_search() {
        let g = AciqSetting::gaussian(1.0, 4, Mode::Symmetric).unwrap();
        let grid_best = (100..=10_000)
            .map(|i| i as f64 * 1e-3)
            .min_by(|a, b| mse(&g, *a).total_cmp(&mse(&g, *b)))
            .unwrap();
        let a = optimal_alpha(&g).unwrap();
        assert!((a - grid_best).abs() <= 0.002, "{a} vs {grid_best}");
    }

    #[test]
    fn solver_covers_every_bit_width() {
        for family in [Family::Laplace, Family::Gaussian] {
            for mode in [Mode::Symmetric, Mode::FusedRelu] {
                let mut prev = 0.0;
                for bits in 1..=16 {
                    let s = AciqSetting::new(DistributionModel::new(family, 1.0, 0.0).unwrap(), bits, mode).unwrap();
                    let a = optimal_alpha(&s).unwrap();
                    assert!(a > prev, "{family} {mode} M={bits}");
                    prev = a;
                }
            }
        }
    }

    #[test]
    fn derivative_sign_flips_once() {
        for family in [Family::Laplace, Family::Gaussian] {
            for mode in [Mode::Symmetric, Mode::FusedRelu] {
                for bits in 1..=8 {
                    let s = AciqSetting::new(DistributionModel::new(family, 2.0, 0.0).unwrap(), bits, mode).unwrap();
                    let signs: Vec<bool> = (0..=2000)
                        .map(|i| mse_derivative(&s, 0.2 + i as f64 * (40.0 - 0.2) / 2000.0) >= 0.0)
                        .collect();
                    let flips = signs.windows(2).filter(|w| w[0] != w[1]).count();
                    let expect = if optimal_alpha(&s).unwrap() < 40.0 { 1 } else { 0 };
                    assert_eq!(flips, expect, "{family} {mode} M={bits}");
                }
            }
        }
    }

    #[test]
    fn mse_decreases_with_bits() {
        for family in [Family::Laplace, Family::Gaussian] {
            let model = DistributionModel::new(family, 1.0, 0.0).unwrap();
            for alpha in [0.5, 2.0, 6.0] {
                for bits in 1..16 {
                    let lo = AciqSetting::new(model, bits, Mode::Symmetric).unwrap();
                    let hi = AciqSetting::new(model, bits + 1, Mode::Symmetric).unwrap();
                    assert!(mse(&hi, alpha) < mse(&lo, alpha));
                }
            }
        }
    }

    #[test]
    fn invalid_settings() {
        assert!(AciqSetting::laplace(1.0, 0, Mode::Symmetric).is_err());
        assert!(AciqSetting::laplace(1.0, 17, Mode::Symmetric).is_err());
        assert!(AciqSetting::laplace(0.0, 4, Mode::Symmetric).is_err());
    }

    proptest::proptest! {
        #[test]
        fn optimal_alpha_scales_linearly(c in 0.01f64..100.0, bits in 1u32..=8, gauss: bool, relu: bool) {
            let family = if gauss { Family::Gaussian } else { Family::Laplace };
            let mode = if relu { Mode::FusedRelu } else { Mode::Symmetric };
            let base = AciqSetting::new(DistributionModel::new(family, 1.0, 0.0).unwrap(), bits, mode).unwrap();
            let scaled = AciqSetting::new(DistributionModel::new(family, c, 0.0).unwrap(), bits, mode).unwrap();
            let (a1, ac) = (optimal_alpha(&base).unwrap(), optimal_alpha(&scaled).unwrap());
            proptest::prop_assert!((ac / c - a1).abs() <= 1e-6 * a1);
        }

        #[test]
        fn derivative_matches_finite_difference(k in 0.5f64..10.0, s in 0.5f64..3.0, bits in 1u32..=8, gauss: bool, relu: bool) {
            let family = if gauss { Family::Gaussian } else { Family::Laplace };
            let mode = if relu { Mode::FusedRelu } else { Mode::Symmetric };
            let set = AciqSetting::new(DistributionModel::new(family, s, 0.0).unwrap(), bits, mode).unwrap();
            let a = k * s;
            let h = 1e-5;
            let fd = (mse(&set, a + h) - mse(&set, a - h)) / (2.0 * h);
            proptest::prop_assert!((fd - mse_derivative(&set, a)).abs() <= 1e-6);
        }
    }
}
