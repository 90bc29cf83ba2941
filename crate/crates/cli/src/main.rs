use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(ngp_cli::run(std::env::args_os()))
}
