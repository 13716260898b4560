fn main() -> std::process::ExitCode {
    orblabel::cli::main()
}
