use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(gestalt_probe_cli::run_args(std::env::args_os()))
}
