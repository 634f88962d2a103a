use clap::Parser;
use cta::cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    env_logger::Builder::from_env(
        env_logger::Env::default().default_filter_or(if cli.verbose() { "info" } else { "warn" }),
    )
    .format_timestamp(None)
    .init();
    if let Err(e) = execute(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
