use std::process::ExitCode;

fn main() -> ExitCode {
    qrcell::cli::run(std::env::args_os())
}
