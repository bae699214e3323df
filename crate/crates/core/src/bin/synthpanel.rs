use std::process::ExitCode;

use clap::Parser;
use synthpanel::cli::{run, threads_from_env, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = threads_from_env().and_then(|threads| {
        if let Some(n) = threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| synthpanel::Error::Config(e.to_string()))?;
        }
        run(&cli)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("synthpanel: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
