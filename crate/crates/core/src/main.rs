fn main() -> std::process::ExitCode {
    rsddej::cli::main()
}
