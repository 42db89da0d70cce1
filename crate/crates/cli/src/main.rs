use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(fdht_cli::run_from(std::env::args_os()))
}
