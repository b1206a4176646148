use std::process::ExitCode;

fn main() -> ExitCode {
    unicom::cli::run_from(std::env::args_os())
}
