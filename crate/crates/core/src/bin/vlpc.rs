use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(vlpc::cli::run(std::env::args_os()) as u8)
}
