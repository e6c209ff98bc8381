use clap::Parser;
use cutoff_cli::{configure_threads, run, Cli};

fn main() {
    let cli = Cli::parse();
    let code = configure_threads().and_then(|()| run(&cli)).unwrap_or_else(|e| {
        eprintln!("{e}");
        e.exit_code()
    });
    std::process::exit(code);
}
