fn main() -> std::process::ExitCode {
    shflab::cli::main()
}
