mod cli;

use std::process::ExitCode;

use clap::Parser;

fn configure_threads() {
    let Ok(value) = std::env::var("LFSAFA_THREADS") else {
        return;
    };
    match value.parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("warning: could not size the thread pool: {e}");
            }
        }
        _ => eprintln!("warning: ignoring LFSAFA_THREADS={value:?}; expected a positive integer"),
    }
}

fn main() -> ExitCode {
    let args = cli::Cli::parse();
    configure_threads();
    match cli::run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
