use std::process::ExitCode;

fn main() -> ExitCode {
    dian::cli::main_with_args(std::env::args_os())
}
