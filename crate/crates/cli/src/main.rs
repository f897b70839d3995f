use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(pnd_cli::run(std::env::args_os()))
}
