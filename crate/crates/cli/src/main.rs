fn main() -> std::process::ExitCode {
    gsrmr_cli::main_with(std::env::args_os())
}
