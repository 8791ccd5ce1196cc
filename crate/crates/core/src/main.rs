fn main() -> std::process::ExitCode {
    jddl::cli::main()
}
