use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(pixelpde::run(std::env::args_os()) as u8)
}
