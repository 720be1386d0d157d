fn main() -> std::process::ExitCode {
    odw::cli::main_with_args(std::env::args_os())
}
