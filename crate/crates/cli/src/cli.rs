use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "dyn4d", about = "Dynamic 4D asset toolkit", version = crate_version(), long_version = crate_version())]
pub struct Cli {
    /// Caps worker threads for parallel sections.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

fn crate_version() -> &'static str {
    static V: std::sync::OnceLock<String> = std::sync::OnceLock::new();
    V.get_or_init(crate::version_string)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RefinerKind {
    Identity,
    Oracle,
    ToyDenoiser,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rectify and filter animated meshes listed in a manifest.
    Curate {
        #[arg(long)]
        meshes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Render an analytic scene into an image-matrix directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the three curation mesh fixtures and their manifest here.
        #[arg(long)]
        mesh_set: Option<PathBuf>,
    },
    /// Two-stage fit of a dynamic radiance field to an image matrix.
    Fit4d {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "identity")]
        refiner: RefinerKind,
        #[arg(long)]
        out: PathBuf,
        /// Clean image matrix for the oracle refiner and the error report.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        /// Denoiser checkpoint for the toy-denoiser refiner.
        #[arg(long)]
        denoiser: Option<PathBuf>,
    },
    /// Render a checkpoint into an image-matrix directory.
    Render {
        #[arg(long)]
        checkpoint: PathBuf,
        /// JSON list of `{elevation_deg, azimuth_deg}` poses.
        #[arg(long, conflicts_with = "views")]
        poses: Option<PathBuf>,
        /// Evenly spaced orbit views, used when no pose file is given.
        #[arg(long, default_value_t = 4)]
        views: usize,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        elevation: f32,
        /// Defaults to every frame the model has.
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 64)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare two image matrices.
    Eval {
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Comma separated: psnr,ssim,mse,fvd-f,fvd-v,fvd-diag,fv4d
        #[arg(long, default_value = "psnr,ssim,mse")]
        metrics: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Progressive training of the toy denoiser.
    TrainToy {
        /// Image-matrix directories; repeat for several scenes.
        #[arg(long, required = true)]
        data: Vec<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in invariant checks.
    Selftest {
        /// Finite-difference seeds per gradient check.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
}
