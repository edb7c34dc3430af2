//! Command-line surface of the denoising pipeline.

pub mod commands;
pub mod error;
pub mod io;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::{CliError, CliResult};
use nexdenoise::metrics::LossForm;
use nexdenoise::net::{InputMode, Variant};
use nexdenoise::train::{DatasetConfig, NoiseProfile, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "nexdenoise", version, about = "Denoise two-NEX complex MR slices with a residual CNN")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train/test datasets from synthetic phantoms.
    Simulate(SimulateArgs),
    /// Train a network on a dataset.
    Train(TrainArgs),
    /// Denoise dataset containers with a checkpoint.
    Denoise(DenoiseArgs),
    /// Score checkpoints against the 2NEX-avg baseline.
    Evaluate(EvaluateArgs),
    /// Train and compare the network variants over several seeds.
    Ablate(AblateArgs),
    /// Noise-map statistics of a dataset.
    NoiseStats(NoiseStatsArgs),
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Dual,
    Single,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Full,
    Tra,
    Res,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Product,
    Sum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum NoiseArg {
    Stationary,
    Gfactor,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON dataset config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Sets both train and test volume counts.
    #[arg(long)]
    pub volumes: Option<usize>,
    #[arg(long)]
    pub train_volumes: Option<usize>,
    #[arg(long)]
    pub test_volumes: Option<usize>,
    #[arg(long, alias = "slices-per-volume")]
    pub slices: Option<usize>,
    #[arg(long)]
    pub image_size: Option<usize>,
    #[arg(long)]
    pub input_nex: Option<usize>,
    #[arg(long)]
    pub target_nex: Option<usize>,
    #[arg(long)]
    pub sigma0: Option<f64>,
    #[arg(long)]
    pub target_baseline_psnr: Option<f64>,
    #[arg(long, value_enum)]
    pub noise: Option<NoiseArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub plane: Option<String>,
    #[arg(long)]
    pub train_seed_start: Option<u64>,
    #[arg(long)]
    pub test_seed_start: Option<u64>,
    #[arg(long)]
    pub calibration_volumes: Option<usize>,
}

impl SimulateArgs {
    pub fn apply(&self, cfg: &mut DatasetConfig) {
        if let Some(v) = self.volumes {
            cfg.train_volumes = v;
            cfg.test_volumes = v;
        }
        set(&mut cfg.train_volumes, self.train_volumes);
        set(&mut cfg.test_volumes, self.test_volumes);
        set(&mut cfg.slices_per_volume, self.slices);
        set(&mut cfg.image_size, self.image_size);
        set(&mut cfg.input_nex, self.input_nex);
        set(&mut cfg.target_nex, self.target_nex);
        if self.sigma0.is_some() {
            cfg.sigma0 = self.sigma0;
        }
        set(&mut cfg.target_baseline_psnr, self.target_baseline_psnr);
        set(
            &mut cfg.noise,
            self.noise.map(|n| match n {
                NoiseArg::Stationary => NoiseProfile::Stationary,
                NoiseArg::Gfactor => NoiseProfile::Gfactor,
            }),
        );
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.plane, self.plane.clone());
        set(&mut cfg.train_seed_start, self.train_seed_start);
        set(&mut cfg.test_seed_start, self.test_seed_start);
        set(&mut cfg.calibration_volumes, self.calibration_volumes);
    }
}

fn set<T>(dst: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *dst = v;
    }
}

/// Flags mirroring [`TrainConfig`].
#[derive(Debug, Args, Default)]
pub struct TrainFlags {
    /// JSON training config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub initial_lr: Option<f64>,
    #[arg(long)]
    pub plateau_factor: Option<f64>,
    #[arg(long)]
    pub plateau_patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub image_size: Option<usize>,
    #[arg(long, value_enum)]
    pub input_mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    #[arg(long, value_enum)]
    pub loss_form: Option<LossArg>,
    /// Weight of the SSIM term for `--loss-form sum`.
    #[arg(long)]
    pub loss_weight: Option<f64>,
    #[arg(long)]
    pub val_volumes: Option<usize>,
    #[arg(long)]
    pub extract_width: Option<usize>,
    #[arg(long)]
    pub bridge_width: Option<usize>,
    #[arg(long, value_enum, default_value = "f32")]
    pub precision: Precision,
}

impl TrainFlags {
    pub fn resolve(&self) -> CliResult<TrainConfig> {
        let mut cfg: TrainConfig = io::load_config(self.config.as_deref())?;
        set(&mut cfg.initial_lr, self.initial_lr);
        set(&mut cfg.plateau_factor, self.plateau_factor);
        set(&mut cfg.plateau_patience, self.plateau_patience);
        set(&mut cfg.batch_size, self.batch_size);
        set(&mut cfg.epochs, self.epochs);
        set(&mut cfg.seed, self.seed);
        if self.image_size.is_some() {
            cfg.image_size = self.image_size;
        }
        set(
            &mut cfg.input_mode,
            self.input_mode.map(|m| match m {
                ModeArg::Dual => InputMode::Dual,
                ModeArg::Single => InputMode::Single,
            }),
        );
        set(
            &mut cfg.variant,
            self.variant.map(|v| match v {
                VariantArg::Full => Variant::Full,
                VariantArg::Tra => Variant::Tra,
                VariantArg::Res => Variant::Res,
            }),
        );
        match (self.loss_form, self.loss_weight) {
            (Some(LossArg::Product), Some(_)) => {
                return Err(CliError::Usage("--loss-weight only applies to --loss-form sum".into()))
            }
            (Some(LossArg::Product), None) => cfg.loss_form = LossForm::Product,
            (Some(LossArg::Sum), w) => cfg.loss_form = LossForm::Sum { weight: w.unwrap_or(1.0) },
            (None, Some(w)) => match &mut cfg.loss_form {
                LossForm::Sum { weight } => *weight = w,
                LossForm::Product => return Err(CliError::Usage("--loss-weight needs --loss-form sum".into())),
            },
            (None, None) => {}
        }
        set(&mut cfg.val_volumes, self.val_volumes);
        set(&mut cfg.extract_width, self.extract_width);
        set(&mut cfg.bridge_width, self.bridge_width);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory or train container.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from the last checkpoint in `--out`.
    #[arg(long)]
    pub resume: bool,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset containers; all must share one slice size.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also export 8-bit grayscale PNGs.
    #[arg(long)]
    pub png: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// One or more checkpoints; each becomes a row.
    #[arg(long, required = true, num_args = 1..)]
    pub checkpoint: Vec<PathBuf>,
    /// Dataset directory (uses its test split) or container.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Row labels, one per checkpoint; defaults to the model name.
    #[arg(long, num_args = 1..)]
    pub method: Vec<String>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Dataset directory holding train.nxd and test.nxd.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Debug, Args)]
pub struct NoiseStatsArgs {
    /// Dataset directory (uses its test split) or container.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Slices to export; default the first one.
    #[arg(long, value_delimiter = ',')]
    pub slices: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    pub bins: usize,
    /// Side of the local-variance patch.
    #[arg(long, default_value_t = 3)]
    pub patch: usize,
    /// Skip the PNG exports.
    #[arg(long)]
    pub no_png: bool,
}

/// Runs one parsed command.
pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Train(a) => commands::train(&a),
        Command::Denoise(a) => commands::denoise(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Ablate(a) => commands::ablate(&a),
        Command::NoiseStats(a) => commands::noise_stats(&a),
    }
}
