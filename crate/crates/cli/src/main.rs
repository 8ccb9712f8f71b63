use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(ppstat_cli::cli::run(std::env::args_os()) as u8)
}
