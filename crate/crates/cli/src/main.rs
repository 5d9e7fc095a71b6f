//! `dance`: ingest footage, fit pose statistics, train the generators, transfer
//! motion, evaluate results and run the synthetic-video detector.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dance_core::dataset::Split;
use dance_nets::Mode;

#[derive(Debug, Parser)]
#[command(name = "dance", version, about = "Pose-guided motion transfer")]
pub struct Cli {
    /// TOML configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Small CPU preset: 128x64 frames, slim networks, short schedule.
    #[arg(long, global = true)]
    pub toy: bool,
    #[arg(long, global = true, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    /// Root for default checkpoint and run outputs.
    #[arg(long, global = true, env = "DANCE_HOME", default_value = ".dance")]
    pub home: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: dance_nets::Error| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

impl SplitArg {
    pub fn split(self) -> Option<Split> {
        match self {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Test => Some(Split::Test),
            SplitArg::All => None,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pair numbered frames with detector pose files into a manifest.
    Ingest {
        #[arg(long)]
        subject: String,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        fps: Option<f64>,
        /// Keep every k-th frame.
        #[arg(long)]
        downsample: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mark the leading fraction of a manifest as training data.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        fraction: Option<f64>,
        /// Defaults to rewriting the input manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute close/far ankle positions and subject heights.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rasterize the manifest's poses as stick figures.
    RenderPoses {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        width: Option<u32>,
        #[arg(long)]
        height: Option<u32>,
    },
    /// Train the staged generator schedule on one subject.
    Train(TrainArgs),
    /// Render a target subject dancing the source poses.
    Transfer(TransferArgs),
    /// Nearest target training frame for every source pose.
    NnBaseline {
        #[arg(long)]
        source: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        source_split: SplitArg,
        #[arg(long)]
        target: PathBuf,
        /// Map source poses into the target frame first.
        #[arg(long)]
        normalize: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Face and body SSIM of generated frames against ground truth.
    Evaluate {
        /// Directory of numbered PNG frames.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Describe real and synthesized clips for the detector and check balance.
    FakedetBuild {
        /// `SUBJECT=PATH`, a frame directory or a manifest.
        #[arg(long, required = true)]
        real: Vec<String>,
        #[arg(long, required = true)]
        fake: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the pair detector with a subject-disjoint held-out split.
    FakedetTrain {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Video-level verdict from the product of pair probabilities.
    FakedetClassify {
        #[arg(long)]
        detector: PathBuf,
        /// Frame directory or manifest.
        #[arg(long)]
        frames: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,
    /// Final bundle; defaults to `<home>/checkpoints/<subject>-<mode>.safetensors`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Manifest of the source dancer.
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub source_split: SplitArg,
    /// Computed from the source poses when omitted.
    #[arg(long)]
    pub source_stats: Option<PathBuf>,
    /// Manifest of the target subject the checkpoint was trained on.
    #[arg(long)]
    pub target: PathBuf,
    /// Computed from the target's training poses when omitted.
    #[arg(long)]
    pub target_stats: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Bad input or configuration (exit code 1).
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn is_validation(e: &anyhow::Error) -> bool {
    use dance_core::Error as C;
    use dance_nets::Error as N;
    let core = |c: &C| {
        matches!(
            c,
            C::MalformedInput(_)
                | C::TopologyMismatch { .. }
                | C::InvalidConfig(_)
                | C::DegenerateRange
                | C::NonPositiveHeight
                | C::NoFrames(_)
                | C::IndexMismatch(_)
                | C::InvalidFraction(_)
                | C::Validation(_)
                | C::LengthMismatch(_)
                | C::SizeMismatch(_)
                | C::EmptyDataset
                | C::InsufficientData(_)
        )
    };
    e.chain().any(|cause| {
        if cause.is::<Invalid>() {
            return true;
        }
        if let Some(c) = cause.downcast_ref::<C>() {
            return core(c);
        }
        match cause.downcast_ref::<N>() {
            Some(N::Core(c)) => core(c),
            Some(n) => !matches!(n, N::Tensor(_) | N::NonFiniteLoss { .. } | N::Io(_) | N::Json(_)),
            None => false,
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_validation(&e) { 1 } else { 2 })
        }
    }
}
