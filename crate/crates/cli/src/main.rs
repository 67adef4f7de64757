use std::path::PathBuf;
use std::process::ExitCode;

use aciq_core::bias_correction::{apply_correction, correction_terms};
use aciq_core::bit_allocation::{allocate_bits, AllocationOptions};
use aciq_core::distributions::sample;
use aciq_core::pipeline::{compare, kld_compare, quantize_tensor, MethodSet, PipelineConfig, Role, DEFAULT_SEED};
use aciq_core::simulation::{alpha_grid, mse_curve, two_channel_bin_experiment};
use aciq_core::tensor_io::{read_tensor, write_tensor, Table};
use aciq_core::{optimal_alpha, AciqSetting, DistributionModel, Family, Mode, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

mod output;

use output::{emit, num, Format};

#[derive(Parser)]
#[command(name = "aciq", version, about = "Analytical clipping, bit allocation and bias correction for low-bit quantization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    Laplace,
    Gaussian,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Laplace => Family::Laplace,
            FamilyArg::Gaussian => Family::Gaussian,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Symmetric,
    Relu,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Symmetric => Mode::Symmetric,
            ModeArg::Relu => Mode::FusedRelu,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RoleArg {
    Weights,
    Activations,
}

fn bits_arg() -> clap::builder::RangedI64ValueParser<u32> {
    clap::value_parser!(u32).range(1..=16)
}

fn parse_methods(s: &str) -> std::result::Result<MethodSet, String> {
    s.parse().map_err(|e: aciq_core::Error| e.to_string())
}

#[derive(Args)]
struct Model {
    #[arg(long, value_enum, default_value = "laplace")]
    family: FamilyArg,
    /// Laplace b or Gaussian sigma.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
}

impl Model {
    fn build(&self) -> Result<DistributionModel> {
        DistributionModel::new(self.family.into(), self.scale, 0.0)
    }
}

#[derive(Args)]
struct Emit {
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Pipeline {
    /// Methods joined by `+` or `,`: aciq, bit_alloc_w, bit_alloc_a, bias_corr (or `all`, `none`).
    #[arg(long, value_parser = parse_methods, default_value = "none")]
    methods: MethodSet,
    #[arg(long, value_parser = bits_arg(), default_value_t = 4)]
    bits: u32,
    #[arg(long, value_parser = bits_arg())]
    weight_bits: Option<u32>,
    #[arg(long, value_parser = bits_arg())]
    activation_bits: Option<u32>,
    #[arg(long, value_enum, default_value = "laplace")]
    family: FamilyArg,
    #[arg(long, value_enum, default_value = "symmetric")]
    mode: ModeArg,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Lower rounded bit widths until the bin quota holds.
    #[arg(long)]
    repair_quota: bool,
}

impl Pipeline {
    fn config(&self) -> PipelineConfig {
        PipelineConfig {
            methods: self.methods,
            weight_bits: self.weight_bits.unwrap_or(self.bits),
            activation_bits: self.activation_bits.unwrap_or(self.bits),
            family: self.family.into(),
            mode: self.mode.into(),
            seed: self.seed,
            allocation: AllocationOptions {
                repair_quota: self.repair_quota,
                ..Default::default()
            },
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the MSE-optimal clipping value.
    OptimalAlpha {
        #[command(flatten)]
        model: Model,
        #[arg(long, value_parser = bits_arg())]
        bits: u32,
        #[arg(long, value_enum, default_value = "symmetric")]
        mode: ModeArg,
    },
    /// Analytic and simulated MSE over a grid of clipping values.
    MseCurve {
        #[command(flatten)]
        model: Model,
        #[arg(long, value_parser = bits_arg())]
        bits: u32,
        #[arg(long, value_enum, default_value = "symmetric")]
        mode: ModeArg,
        #[arg(long, default_value_t = 0.5)]
        alpha_min: f64,
        #[arg(long, default_value_t = 10.0)]
        alpha_max: f64,
        #[arg(long, default_value_t = 0.1)]
        alpha_step: f64,
        /// Monte Carlo samples (at least 1000).
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1000..))]
        n: u64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        emit: Emit,
    },
    /// Quantize a tensor file as weights or activations.
    Quantize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        role: RoleArg,
        #[command(flatten)]
        pipeline: Pipeline,
        /// Quantized tensor output.
        #[arg(long)]
        out: PathBuf,
        /// Report output; stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// MSE of every combination of the enabled methods.
    Compare {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        pipeline: Pipeline,
        /// All 16 combinations regardless of --methods.
        #[arg(long)]
        full_matrix: bool,
        #[command(flatten)]
        emit: Emit,
    },
    /// Analytic clipping against the KL-divergence search and plain min/max.
    KldCompare {
        /// Tensor file; samples are drawn from --family/--scale when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        model: Model,
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, value_parser = bits_arg(), default_value_t = 4)]
        bits: u32,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        emit: Emit,
    },
    /// Per-channel bit widths for a bin quota of channels * 2^bits.
    AllocBits {
        /// Clipping values, comma separated.
        #[arg(long, value_delimiter = ',', required_unless_present = "input", conflicts_with = "input")]
        alphas: Vec<f64>,
        /// Tensor file; each channel's alpha is max|x|.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_parser = bits_arg())]
        bits: u32,
        #[arg(long, value_parser = bits_arg(), default_value_t = 1)]
        min_bits: u32,
        #[arg(long, value_parser = bits_arg(), default_value_t = 8)]
        max_bits: u32,
        #[arg(long)]
        repair_quota: bool,
        #[command(flatten)]
        emit: Emit,
    },
    /// Restore per-channel mean and norm of quantized weights.
    BiasCorrect {
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        quantized: PathBuf,
        /// Corrected tensor output.
        #[arg(long)]
        out: PathBuf,
        /// Correction terms; stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Measure every split of a bin quota between two Gaussian channels.
    TwoChannelExperiment {
        #[arg(long)]
        alpha_i: f64,
        #[arg(long)]
        alpha_j: f64,
        #[arg(long, default_value_t = 32)]
        quota: u32,
        #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        emit: Emit,
    },
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::OptimalAlpha { model, bits, mode } => {
            let alpha = optimal_alpha(&AciqSetting::new(model.build()?, bits, mode.into())?)?;
            println!("{alpha:.4}");
        }
        Command::MseCurve { model, bits, mode, alpha_min, alpha_max, alpha_step, n, seed, emit: e } => {
            let grid = alpha_grid(alpha_min, alpha_max, alpha_step)?;
            let curve = mse_curve(&model.build()?, bits, mode.into(), &grid, n as usize, seed)?;
            let mut t = Table::new(["alpha", "analytic", "empirical"]);
            for i in 0..curve.alphas.len() {
                t.push([num(curve.alphas[i]), num(curve.analytic[i]), num(curve.empirical[i])]);
            }
            emit(&t, &curve, e.format, e.out.as_deref())?;
        }
        Command::Quantize { input, role, pipeline, out, report, format } => {
            let tensor = read_tensor(&input)?;
            let role = match role {
                RoleArg::Weights => Role::Weights,
                RoleArg::Activations => Role::Activations,
            };
            let (q, r) = quantize_tensor(&tensor, role, &pipeline.config())?;
            for w in &r.warnings {
                eprintln!("warning: {w}");
            }
            write_tensor(&q, &out)?;
            let mut t = Table::new(["channel", "bits", "alpha", "mu", "xi", "mse", "count"]);
            for c in &r.channels {
                t.push([
                    c.channel.to_string(),
                    c.bits.to_string(),
                    num(c.alpha),
                    num(c.mu),
                    num(c.xi),
                    num(c.mse),
                    c.count.to_string(),
                ]);
            }
            eprintln!("total_mse={} mean_channel_mse={} seed={}", r.total_mse, r.mean_channel_mse, r.seed);
            emit(&t, &r, format, report.as_deref())?;
        }
        Command::Compare { input, pipeline, full_matrix, emit: e } => {
            let tensor = read_tensor(&input)?;
            let enabled = if full_matrix { MethodSet::ALL } else { pipeline.methods };
            let rows = compare(&tensor, enabled, &pipeline.config())?;
            let mut t = Table::new(["combination", "total_mse", "mean_channel_mse", "weights_mse", "activations_mse"]);
            for r in &rows {
                t.push([
                    r.methods.to_string(),
                    num(r.total_mse),
                    num(r.mean_channel_mse),
                    num(r.weights_mse),
                    num(r.activations_mse),
                ]);
            }
            emit(&t, &rows, e.format, e.out.as_deref())?;
        }
        Command::KldCompare { input, model, n, bits, seed, emit: e } => {
            let samples = match input {
                Some(path) => read_tensor(&path)?.into_data(),
                None => sample(&model.build()?, n as usize, seed)?,
            };
            let rows = kld_compare(&samples, bits, model.family.into())?;
            let mut t = Table::new(["method", "threshold", "mse", "micros"]);
            for r in &rows {
                t.push([r.method.to_string(), num(r.threshold), num(r.mse), format!("{:.1}", r.micros)]);
            }
            emit(&t, &rows, e.format, e.out.as_deref())?;
        }
        Command::AllocBits { alphas, input, bits, min_bits, max_bits, repair_quota, emit: e } => {
            let alphas = match input {
                Some(path) => read_tensor(&path)?
                    .iter_channels()
                    .map(|ch| ch.iter().fold(0.0f64, |m, x| m.max(x.abs())))
                    .collect(),
                None => alphas,
            };
            let opts = AllocationOptions { min_bits, max_bits, repair_quota };
            let a = allocate_bits(&alphas, bits, &opts)?;
            let mut t = Table::new(["channel", "alpha", "fractional_bins", "bits"]);
            for (c, ((alpha, frac), m)) in a.alphas.iter().zip(&a.fractional_bins).zip(&a.bits).enumerate() {
                t.push([c.to_string(), num(*alpha), num(*frac), m.to_string()]);
            }
            eprintln!("quota={} used={} drift={:+.4}", a.quota_bins, a.used_bins(), a.quota_drift());
            emit(&t, &a, e.format, e.out.as_deref())?;
        }
        Command::BiasCorrect { original, quantized, out, report, format } => {
            let o = read_tensor(&original)?;
            let q = read_tensor(&quantized)?;
            let terms = correction_terms(&o, &q)?;
            write_tensor(&apply_correction(&q, &terms)?, &out)?;
            let mut t = Table::new(["channel", "mu", "xi"]);
            for (c, (mu, xi)) in terms.mu.iter().zip(&terms.xi).enumerate() {
                t.push([c.to_string(), num(*mu), num(*xi)]);
            }
            emit(&t, &terms, format, report.as_deref())?;
        }
        Command::TwoChannelExperiment { alpha_i, alpha_j, quota, n, seed, emit: e } => {
            let x = two_channel_bin_experiment(alpha_i, alpha_j, quota, n as usize, seed)?;
            let mut t = Table::new(["bins_i", "bins_j", "mse"]);
            for s in &x.mse_table {
                t.push([s.bins_i.to_string(), s.bins_j.to_string(), num(s.mse)]);
            }
            eprintln!(
                "best=({}, {}) predicted=({:.3}, {:.3})",
                x.best_split.0, x.best_split.1, x.predicted_split.0, x.predicted_split.1
            );
            emit(&t, &x, e.format, e.out.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
