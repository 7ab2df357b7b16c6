use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(splitcheck_cli::run(std::env::args_os()) as u8)
}
