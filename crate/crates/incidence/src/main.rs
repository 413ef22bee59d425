use std::process::ExitCode;

fn main() -> ExitCode {
    incidence::cli::main()
}
