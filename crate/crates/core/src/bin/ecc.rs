fn main() -> std::process::ExitCode {
    vcec::cli::main()
}
