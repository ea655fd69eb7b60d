use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(fewshot::cli::run(std::env::args_os()))
}
