use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(mtd_cli::run(std::env::args_os()) as u8)
}
