fn main() -> std::process::ExitCode {
    granular::cli::main()
}
