use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(hga_runner::app::run(std::env::args_os()))
}
