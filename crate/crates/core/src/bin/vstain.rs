use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(vstain::cli::run(std::env::args_os()))
}
