use std::process::ExitCode;

fn main() -> ExitCode {
    poolea::main_with_args(std::env::args_os())
}
