fn main() -> std::process::ExitCode {
    icpl::cli::main()
}
