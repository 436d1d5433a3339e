use std::process::ExitCode;

use clap::Parser;
use lldpm_cli::error::{EXIT_OK, EXIT_RUNTIME};
use lldpm_cli::{run, thread_count, Cli, CliError};

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let code = match setup_and_run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

fn setup_and_run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = thread_count(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let r = run(cli, &mut lock);
    if r.is_ok() {
        use std::io::Write;
        if let Err(e) = lock.flush() {
            eprintln!("error: {e}");
            std::process::exit(EXIT_RUNTIME);
        }
    }
    r
}
