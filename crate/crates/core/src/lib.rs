//! Analytical clipping, per-channel bit allocation and bias correction for
//! low-bit uniform post-training quantization.
//!
//! The closed-form MSE of a clipped midpoint quantizer under a Laplace or
//! Gaussian prior lives in [`aciq`]; [`simulation`] checks it against Monte
//! Carlo runs, and [`pipeline`] composes the methods over whole tensors.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aciq;
pub mod bias_correction;
pub mod bit_allocation;
pub mod distributions;
pub mod error;
pub mod kld;
pub mod pipeline;
pub mod quantizer;
pub mod simulation;
pub mod special;
pub mod tensor_io;

pub use aciq::{clip_noise, mse, mse_derivative, optimal_alpha, rounding_noise_pwl, rounding_noise_uniform, AciqSetting};
pub use bias_correction::{apply_correction, correction_terms, fold_correction, CorrectionTerms};
pub use bit_allocation::{allocate_bins, allocate_bits, allocation_mse, AllocationOptions, BitAllocation};
pub use distributions::{DistributionModel, Family};
pub use error::{Error, Result};
pub use kld::{build_histogram, kld_threshold, Histogram};
pub use pipeline::{compare, kld_compare, quantize_tensor, Method, MethodSet, PipelineConfig, QuantizeReport, Role};
pub use quantizer::{clip, empirical_mse, make_grid, quantize, quantize_minmax_channel, ChannelTensor, Mode, QuantGrid};
pub use simulation::{empirical_argmin, mse_curve, MseCurve};
pub use tensor_io::{read_tensor, write_tensor, Table};
