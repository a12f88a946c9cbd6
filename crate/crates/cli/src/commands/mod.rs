pub mod curate;
pub mod eval;
pub mod fit4d;
pub mod render;
pub mod selftest;
pub mod synth;
pub mod train_toy;

use crate::cli::Command;
use dyn4d_core::matrix::ImageMatrix;
use dyn4d_core::Error;
use std::path::Path;

pub fn dispatch(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Curate { meshes, out, report, config } => curate::run(&meshes, &out, &report, config.as_deref()).map(|_| ()),
        Command::Synth { out, config, mesh_set } => synth::run(&out, config.as_deref(), mesh_set.as_deref()),
        Command::Fit4d {
            input,
            config,
            refiner,
            out,
            ground_truth,
            denoiser,
        } => fit4d::run(&fit4d::Fit4dArgs {
            input,
            config,
            refiner,
            out,
            ground_truth,
            denoiser,
        })
        .map(|_| ()),
        Command::Render {
            checkpoint,
            poses,
            views,
            elevation,
            frames,
            width,
            height,
            samples,
            out,
        } => render::run(&render::RenderArgs {
            checkpoint,
            poses,
            views,
            elevation,
            frames,
            width,
            height,
            samples,
            out,
        }),
        Command::Eval { generated, reference, metrics, out } => eval::run(&generated, &reference, &metrics, &out).map(|_| ()),
        Command::TrainToy { data, config, out } => train_toy::run(&data, config.as_deref(), &out).map(|_| ()),
        Command::Selftest { seeds, corrupt_gradient } => {
            let report = selftest::run(&selftest::Options { seeds, corrupt_gradient });
            print!("{}", report.table());
            if report.all_passed() {
                Ok(())
            } else {
                Err(Error::Contract(format!("{} of {} self-checks failed", report.failures().len(), report.checks.len())))
            }
        }
    }
}

/// Loads an image matrix, naming the directory when it is missing.
pub(crate) fn load_matrix(dir: &Path) -> Result<ImageMatrix, Error> {
    if !dir.join("manifest.json").is_file() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} is not an image-matrix directory (no manifest.json)", dir.display()),
        )));
    }
    ImageMatrix::load_dir(dir)
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("csv: {other:?}")),
    }
}
