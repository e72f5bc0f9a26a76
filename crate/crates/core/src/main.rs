use clap::Parser;
use mfg_core::cli::{run, Cli};

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("mfg: {e}");
        std::process::exit(e.exit_code());
    }
}
