use clap::Parser;

use hiercast::cli::{error_line, run, Cli};

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    if let Err(e) = run(cli) {
        eprintln!("{}", error_line(&e));
        std::process::exit(e.exit_code());
    }
}
