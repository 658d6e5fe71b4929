use std::process::ExitCode;

fn main() -> ExitCode {
    screenguide::cli::main_with_args(std::env::args_os())
}
