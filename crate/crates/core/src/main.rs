fn main() -> std::process::ExitCode {
    emanatrix::cli::main()
}
