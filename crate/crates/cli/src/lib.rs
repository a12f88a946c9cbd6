//! Library side of the `dyn4d` binary: argument types, config loading,
//! run manifests and one module per subcommand.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod manifest;

use dyn4d_core::Error;

pub use cli::{Cli, Command};

/// Process exit code for a failed run.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        e if e.is_io() => 3,
        _ => 4,
    }
}

/// Toolkit version plus the versions of every on-disk format it reads or
/// writes.
pub fn version_string() -> String {
    format!(
        "{} (checkpoint {}, tensor blob {}, run manifest {}, mesh manifest 1, image matrix manifest 1)",
        env!("CARGO_PKG_VERSION"),
        dyn4d_core::params::CHECKPOINT_FORMAT,
        String::from_utf8_lossy(dyn4d_core::tensor::io::MAGIC),
        manifest::RUN_MANIFEST_FORMAT,
    )
}

/// Runs a parsed command line. `--threads` is applied here.
pub fn run(cli: Cli) -> Result<(), Error> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        // A second call in the same process (tests) keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    commands::dispatch(cli.command)
}
