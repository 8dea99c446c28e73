fn main() -> std::process::ExitCode {
    gesturegen_service::cli::main()
}
