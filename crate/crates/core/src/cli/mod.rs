//! Command-line front end.

mod artifacts;
mod commands;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lfsafa::adapt::AdaptFlags;
use lfsafa::data::io::BitDepth;
use lfsafa::train::{Phase, Preset};
use lfsafa::Result;

#[derive(Parser, Debug)]
#[command(name = "lfsafa", version, about = "Light-field super-resolution with sub-aperture feature adaptation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Split a light field into view_{u}_{v}.png files.
    Decode(DecodeArgs),
    /// Pack a view directory into one macro-pixel PNG.
    Encode(EncodeArgs),
    /// Generate synthetic parallax light fields.
    Synth(SynthArgs),
    /// Bicubic-downscale light fields to make low-resolution inputs.
    Degrade(DegradeArgs),
    /// Train the backbone (phase 1) or the adaptation module (phase 2).
    Train(TrainArgs),
    /// Super-resolve light fields with a backbone and optional adaptation module.
    Sr(SrArgs),
    /// Score super-resolved light fields against ground truth.
    Eval(EvalArgs),
    /// Score the bicubic baseline on high-resolution light fields.
    Bicubic(BicubicArgs),
    /// Train and score the five-row ablation matrix on synthetic data.
    Ablate(AblateArgs),
    /// Finite-difference check of the full network's gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Depth {
    #[value(name = "8")]
    Eight,
    #[value(name = "16")]
    Sixteen,
}

impl From<Depth> for BitDepth {
    fn from(d: Depth) -> Self {
        match d {
            Depth::Eight => BitDepth::Eight,
            Depth::Sixteen => BitDepth::Sixteen,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PhaseArg {
    Backbone,
    Adapt,
}

impl From<PhaseArg> for Phase {
    fn from(p: PhaseArg) -> Self {
        match p {
            PhaseArg::Backbone => Phase::Backbone,
            PhaseArg::Adapt => Phase::Adaptation,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PresetArg {
    Desk,
    Paper,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Desk => Preset::Desk,
            PresetArg::Paper => Preset::Paper,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Ablation {
    Full,
    NoDiff,
    NoResidual,
}

impl From<Ablation> for AdaptFlags {
    fn from(a: Ablation) -> Self {
        let full = AdaptFlags::default();
        match a {
            Ablation::Full => full,
            Ablation::NoDiff => AdaptFlags {
                use_difference: false,
                ..full
            },
            Ablation::NoResidual => AdaptFlags {
                use_residual: false,
                ..full
            },
        }
    }
}

#[derive(Args, Debug)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    /// Macro-pixel PNG or view directory.
    pub input: PathBuf,
    #[arg(long)]
    pub angular: usize,
    #[arg(long, value_enum, default_value = "8")]
    pub depth: Depth,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    /// View directory.
    pub input: PathBuf,
    /// Detected from the file names when omitted.
    #[arg(long)]
    pub angular: Option<usize>,
    #[arg(long, value_enum, default_value = "8")]
    pub depth: Depth,
    /// Output PNG path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 12)]
    pub count: usize,
    #[arg(long, default_value_t = 3)]
    pub angular: usize,
    /// Shift between neighbouring views in pixels.
    #[arg(long, default_value_t = 1.0)]
    pub disparity: f32,
    /// View side in pixels.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "8")]
    pub depth: Depth,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct DegradeArgs {
    /// Light field or directory of light fields.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub scale: usize,
    #[arg(long)]
    pub angular: Option<usize>,
    #[arg(long, value_enum, default_value = "8")]
    pub depth: Depth,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub phase: PhaseArg,
    #[arg(long, value_enum, default_value = "desk")]
    pub preset: PresetArg,
    #[arg(long)]
    pub scale: Option<usize>,
    #[arg(long)]
    pub angular: Option<usize>,
    /// Adaptation variant trained in phase 2.
    #[arg(long, value_enum, default_value = "full")]
    pub ablation: Ablation,
    /// Backbone checkpoint; required for phase 2.
    #[arg(long)]
    pub backbone: Option<PathBuf>,
    /// Training light fields; synthetic data is generated when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Number of synthetic light fields.
    #[arg(long, default_value_t = 12)]
    pub synth: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 1.0)]
    pub disparity: f32,
    #[arg(long, default_value_t = 1)]
    pub data_seed: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batches_per_epoch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f32>,
    #[arg(long)]
    pub patch: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Backbone feature width (phase 1).
    #[arg(long)]
    pub width: Option<usize>,
    /// Backbone residual blocks (phase 1).
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Adaptation module width (phase 2).
    #[arg(long)]
    pub sas_width: Option<usize>,
    #[arg(long)]
    pub no_augment: bool,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct SrArgs {
    #[arg(long)]
    pub backbone: PathBuf,
    #[arg(long)]
    pub adapt: Option<PathBuf>,
    /// Low-resolution light field or directory of light fields.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub angular: Option<usize>,
    /// Must match the checkpoints when given.
    #[arg(long)]
    pub scale: Option<usize>,
    #[arg(long, value_enum, default_value = "8")]
    pub depth: Depth,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub sr: PathBuf,
    #[arg(long)]
    pub hr: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub scale: usize,
    #[arg(long)]
    pub angular: Option<usize>,
    /// Pixels cropped per side; defaults to the scale.
    #[arg(long)]
    pub border: Option<usize>,
    /// Round Y to 8-bit levels before scoring.
    #[arg(long)]
    pub quantize: bool,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    pub json: bool,
    /// Also write report.json and report.txt here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct BicubicArgs {
    #[arg(long)]
    pub hr: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub scale: usize,
    #[arg(long)]
    pub angular: Option<usize>,
    #[arg(long)]
    pub border: Option<usize>,
    #[arg(long)]
    pub quantize: bool,
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// Run every row of the matrix (the only mode).
    #[arg(long)]
    pub matrix: bool,
    #[arg(long)]
    pub train_count: Option<usize>,
    #[arg(long)]
    pub test_count: Option<usize>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Phase-2 steps per epoch.
    #[arg(long)]
    pub batches_per_epoch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    #[arg(long, default_value_t = 2)]
    pub angular: usize,
    #[arg(long, default_value_t = 8)]
    pub size: usize,
    /// Failure threshold on the maximum relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Decode(a) => commands::decode(a),
        Command::Encode(a) => commands::encode(a),
        Command::Synth(a) => commands::synth(a),
        Command::Degrade(a) => commands::degrade(a),
        Command::Train(a) => commands::train(a),
        Command::Sr(a) => commands::sr(a),
        Command::Eval(a) => commands::eval(a),
        Command::Bicubic(a) => commands::bicubic(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
    }
}
