fn main() -> std::process::ExitCode {
    dpfair_cli::main_with_args(std::env::args_os())
}
