use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(pseudobox::cli::run() as u8)
}
