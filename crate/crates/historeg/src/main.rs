use std::process::ExitCode;

fn main() -> ExitCode {
    historeg::cli::run()
}
