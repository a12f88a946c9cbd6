use clap::Parser;

fn main() {
    let cli = dyn4d_cli::Cli::parse();
    if let Err(e) = dyn4d_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(dyn4d_cli::exit_code(&e));
    }
}
