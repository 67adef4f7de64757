//! Composition of the quantization methods over a whole tensor.
//!
//! Activations: bit allocation (optional), then per-channel clipping at the
//! analytic optimum (`aciq`) or at the channel range, then midpoint
//! quantization. Weights: bit allocation (optional), min/max quantization,
//! then bias correction (optional). `aciq` has no effect on weights and
//! `bias_corr` none on activations.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::aciq::AciqSetting;
use crate::bias_correction::{apply_channel, channel_terms};
use crate::bit_allocation::{allocate_bits, AllocationOptions};
use crate::distributions::{DistributionModel, Family};
use crate::error::{Error, Result};
use crate::kld::{build_histogram, kld_threshold, DEFAULT_BINS};
use crate::quantizer::{check_bits, empirical_mse, mse_between, quantize_minmax_channel, ChannelTensor, Mode, QuantGrid};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Aciq,
    BitAllocW,
    BitAllocA,
    BiasCorr,
}

impl Method {
    /// Also the bit order of [`MethodSet::index`].
    pub const ALL: [Method; 4] = [Method::Aciq, Method::BitAllocW, Method::BitAllocA, Method::BiasCorr];

    pub fn name(self) -> &'static str {
        match self {
            Method::Aciq => "aciq",
            Method::BitAllocW => "bit_alloc_w",
            Method::BitAllocA => "bit_alloc_a",
            Method::BiasCorr => "bias_corr",
        }
    }

    fn bit(self) -> u8 {
        1 << Method::ALL.iter().position(|&m| m == self).expect("listed")
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid("method", format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct MethodSet(u8);

impl MethodSet {
    pub const NONE: MethodSet = MethodSet(0);
    pub const ALL: MethodSet = MethodSet(0b1111);

    pub fn from_index(index: u8) -> Result<Self> {
        if index > Self::ALL.0 {
            return Err(Error::invalid("index", format!("{index} exceeds 15")));
        }
        Ok(Self(index))
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn contains(self, m: Method) -> bool {
        self.0 & m.bit() != 0
    }

    pub fn with(self, m: Method) -> Self {
        Self(self.0 | m.bit())
    }

    pub fn iter(self) -> impl Iterator<Item = Method> {
        Method::ALL.into_iter().filter(move |&m| self.contains(m))
    }

    /// Every subset, in increasing [`index`](Self::index) order.
    pub fn subsets(self) -> Vec<MethodSet> {
        (0..=Self::ALL.0)
            .filter(|k| k & !self.0 == 0)
            .map(MethodSet)
            .collect()
    }
}

impl FromIterator<Method> for MethodSet {
    fn from_iter<I: IntoIterator<Item = Method>>(iter: I) -> Self {
        iter.into_iter().fold(Self::NONE, Self::with)
    }
}

impl fmt::Display for MethodSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == 0 {
            return f.write_str("none");
        }
        let names: Vec<&str> = self.iter().map(Method::name).collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for MethodSet {
    type Err = Error;

    /// `none`, `all`, or names joined by `+` or `,`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "" | "none" => Ok(Self::NONE),
            "all" => Ok(Self::ALL),
            list => list
                .split(['+', ','])
                .map(|t| t.trim().parse::<Method>())
                .collect(),
        }
    }
}

impl Serialize for MethodSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Weights,
    Activations,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Weights => "weights",
            Role::Activations => "activations",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub methods: MethodSet,
    pub weight_bits: u32,
    pub activation_bits: u32,
    pub family: Family,
    pub mode: Mode,
    pub seed: u64,
    pub allocation: AllocationOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            methods: MethodSet::NONE,
            weight_bits: 4,
            activation_bits: 4,
            family: Family::Laplace,
            mode: Mode::Symmetric,
            seed: DEFAULT_SEED,
            allocation: AllocationOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        check_bits(self.weight_bits)?;
        check_bits(self.activation_bits)
    }

    pub fn bits(&self, role: Role) -> u32 {
        match role {
            Role::Weights => self.weight_bits,
            Role::Activations => self.activation_bits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelReport {
    pub channel: usize,
    pub bits: u32,
    pub alpha: f64,
    pub mu: f64,
    pub xi: f64,
    pub mse: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantizeReport {
    pub role: Role,
    pub methods: MethodSet,
    pub bits: u32,
    pub family: Family,
    pub mode: Mode,
    pub seed: u64,
    /// Element-weighted mean of the channel MSEs.
    pub total_mse: f64,
    pub mean_channel_mse: f64,
    /// Relative bin-quota overshoot of the rounded allocation, when
    /// bit allocation ran.
    pub quota_drift: Option<f64>,
    pub warnings: Vec<String>,
    pub channels: Vec<ChannelReport>,
}

struct ChannelOut {
    values: Vec<f64>,
    report: ChannelReport,
}

fn max_abs(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn relu(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|x| x.max(0.0)).collect()
}

/// Fitted model of a centered channel, or `None` when the channel is constant.
fn fit_centered(family: Family, xs: &[f64]) -> Result<Option<DistributionModel>> {
    Ok(DistributionModel::fit(family, xs)?.map(|m| m.centered()))
}

fn aciq_alpha(model: &DistributionModel, bits: u32, mode: Mode) -> Result<f64> {
    AciqSetting::new(*model, bits, mode)?.optimal_alpha()
}

/// Clipping values used to split the bin quota across channels.
fn allocation_alphas(tensor: &ChannelTensor, role: Role, cfg: &PipelineConfig) -> Result<Vec<f64>> {
    let bits = cfg.bits(role);
    tensor
        .iter_channels()
        .map(|ch| {
            if role == Role::Activations && cfg.methods.contains(Method::Aciq) {
                match fit_centered(cfg.family, ch)? {
                    Some(model) => aciq_alpha(&model, bits, cfg.mode),
                    None => Ok(0.0),
                }
            } else if role == Role::Activations && cfg.mode == Mode::FusedRelu {
                Ok(ch.iter().fold(0.0f64, |m, &x| m.max(x)))
            } else {
                Ok(max_abs(ch))
            }
        })
        .collect()
}

fn reference(ch: &[f64], mode: Mode, role: Role) -> Vec<f64> {
    match (role, mode) {
        (Role::Activations, Mode::FusedRelu) => relu(ch),
        _ => ch.to_vec(),
    }
}

fn quantize_activation_channel(c: usize, ch: &[f64], bits: u32, cfg: &PipelineConfig, warnings: &mut Vec<String>) -> Result<ChannelOut> {
    let relu_mode = cfg.mode == Mode::FusedRelu;
    let target = reference(ch, cfg.mode, Role::Activations);
    let pass_through = |alpha: f64| ChannelOut {
        report: ChannelReport { channel: c, bits, alpha, mu: 0.0, xi: 1.0, mse: 0.0, count: ch.len() },
        values: target.clone(),
    };
    let (values, alpha) = if cfg.methods.contains(Method::Aciq) {
        let Some(model) = fit_centered(cfg.family, ch)? else {
            warnings.push(format!("channel {c}: constant input, passed through unquantized"));
            return Ok(pass_through(0.0));
        };
        let alpha = aciq_alpha(&model, bits, cfg.mode)?;
        let grid = QuantGrid::new(alpha, bits, cfg.mode)?;
        if relu_mode {
            (ch.iter().map(|&x| grid.quantize(x)).collect::<Vec<_>>(), alpha)
        } else {
            let m = DistributionModel::fit(cfg.family, ch)?.map_or(0.0, |f| f.mean());
            (ch.iter().map(|&x| m + grid.quantize(x - m)).collect(), alpha)
        }
    } else if relu_mode {
        let alpha = target.iter().fold(0.0f64, |m, &x| m.max(x));
        if alpha == 0.0 {
            return Ok(pass_through(0.0));
        }
        let grid = QuantGrid::new(alpha, bits, Mode::FusedRelu)?;
        (ch.iter().map(|&x| grid.quantize(x)).collect(), alpha)
    } else {
        (quantize_minmax_channel(ch, bits)?.0, max_abs(ch))
    };
    let mse = mse_between(&target, &values)?;
    Ok(ChannelOut {
        report: ChannelReport { channel: c, bits, alpha, mu: 0.0, xi: 1.0, mse, count: ch.len() },
        values,
    })
}

fn quantize_weight_channel(c: usize, ch: &[f64], bits: u32, cfg: &PipelineConfig) -> Result<ChannelOut> {
    let (mut values, _, _) = quantize_minmax_channel(ch, bits)?;
    let (mut mu, mut xi) = (0.0, 1.0);
    if cfg.methods.contains(Method::BiasCorr) {
        (mu, xi) = channel_terms(ch, &values)?;
        values = apply_channel(&values, mu, xi);
    }
    let mse = mse_between(ch, &values)?;
    Ok(ChannelOut {
        report: ChannelReport { channel: c, bits, alpha: max_abs(ch), mu, xi, mse, count: ch.len() },
        values,
    })
}

/// Quantizes every channel of `tensor` in the given role and measures the
/// per-channel MSE against the original (or `max(0, x)` for fused-ReLU
/// activations).
pub fn quantize_tensor(tensor: &ChannelTensor, role: Role, cfg: &PipelineConfig) -> Result<(ChannelTensor, QuantizeReport)> {
    cfg.validate()?;
    if tensor.is_empty() {
        return Err(Error::EmptyTensor);
    }
    let bits = cfg.bits(role);
    let alloc_method = match role {
        Role::Weights => Method::BitAllocW,
        Role::Activations => Method::BitAllocA,
    };
    let mut warnings = Vec::new();
    let (channel_bits, quota_drift) = if cfg.methods.contains(alloc_method) {
        let alphas = allocation_alphas(tensor, role, cfg)?;
        match allocate_bits(&alphas, bits, &cfg.allocation) {
            Ok(a) => {
                let drift = a.quota_drift();
                (a.bits, Some(drift))
            }
            Err(Error::DegenerateLayer) => {
                warnings.push("every channel has zero range, bit allocation skipped".to_owned());
                (vec![bits; tensor.channels()], None)
            }
            Err(e) => return Err(e),
        }
    } else {
        (vec![bits; tensor.channels()], None)
    };

    let mut data = Vec::with_capacity(tensor.len());
    let mut channels = Vec::with_capacity(tensor.channels());
    for (c, ch) in tensor.iter_channels().enumerate() {
        let out = match role {
            Role::Activations => quantize_activation_channel(c, ch, channel_bits[c], cfg, &mut warnings)?,
            Role::Weights => quantize_weight_channel(c, ch, channel_bits[c], cfg)?,
        };
        data.extend(out.values);
        channels.push(out.report);
    }
    let count: usize = channels.iter().map(|r| r.count).sum();
    let total_mse = channels.iter().map(|r| r.mse * r.count as f64).sum::<f64>() / count as f64;
    let mean_channel_mse = channels.iter().map(|r| r.mse).sum::<f64>() / channels.len() as f64;
    let report = QuantizeReport {
        role,
        methods: cfg.methods,
        bits,
        family: cfg.family,
        mode: cfg.mode,
        seed: cfg.seed,
        total_mse,
        mean_channel_mse,
        quota_drift,
        warnings,
        channels,
    };
    Ok((tensor.with_data(data)?, report))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub methods: MethodSet,
    /// `weights_mse + activations_mse`.
    pub total_mse: f64,
    /// Sum of the two roles' mean channel MSEs.
    pub mean_channel_mse: f64,
    pub weights_mse: f64,
    pub activations_mse: f64,
}

/// Runs every subset of `enabled` on `tensor`, treating it once as weights
/// and once as activations. Rows come in increasing [`MethodSet::index`]
/// order.
pub fn compare(tensor: &ChannelTensor, enabled: MethodSet, base: &PipelineConfig) -> Result<Vec<CompareRow>> {
    enabled
        .subsets()
        .into_iter()
        .map(|methods| {
            let cfg = PipelineConfig { methods, ..*base };
            let (_, w) = quantize_tensor(tensor, Role::Weights, &cfg)?;
            let (_, a) = quantize_tensor(tensor, Role::Activations, &cfg)?;
            Ok(CompareRow {
                methods,
                total_mse: w.total_mse + a.total_mse,
                mean_channel_mse: w.mean_channel_mse + a.mean_channel_mse,
                weights_mse: w.total_mse,
                activations_mse: a.total_mse,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    Aciq,
    Kld,
    Naive,
}

impl fmt::Display for Calibration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Calibration::Aciq => "aciq",
            Calibration::Kld => "kld",
            Calibration::Naive => "naive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRow {
    pub method: Calibration,
    pub threshold: f64,
    pub mse: f64,
    pub micros: f64,
}

/// Clipping threshold by the analytic optimum of the fitted model, by the
/// histogram KL search, and by `max|x|`. Each threshold is scored with a
/// symmetric midpoint quantizer over `[-t, t]` on the same samples. Times
/// cover threshold selection only.
pub fn kld_compare(samples: &[f64], bits: u32, family: Family) -> Result<Vec<CalibrationRow>> {
    check_bits(bits)?;
    if samples.is_empty() {
        return Err(Error::EmptyTensor);
    }
    let timed = |f: &dyn Fn() -> Result<f64>| -> Result<(f64, f64)> {
        let start = Instant::now();
        let t = f()?;
        Ok((t, start.elapsed().as_secs_f64() * 1e6))
    };
    let aciq = timed(&|| {
        let model = fit_centered(family, samples)?.ok_or(Error::DegenerateLayer)?;
        aciq_alpha(&model, bits, Mode::Symmetric)
    })?;
    let kld = timed(&|| kld_threshold(&build_histogram(samples, DEFAULT_BINS)?, bits))?;
    let naive = timed(&|| {
        let t = max_abs(samples);
        if t > 0.0 { Ok(t) } else { Err(Error::DegenerateLayer) }
    })?;
    [(Calibration::Aciq, aciq), (Calibration::Kld, kld), (Calibration::Naive, naive)]
        .into_iter()
        .map(|(method, (threshold, micros))| {
            let mse = empirical_mse(samples, &QuantGrid::new(threshold, bits, Mode::Symmetric)?)?;
            Ok(CalibrationRow { method, threshold, mse, micros })
        })
        .collect()
}
