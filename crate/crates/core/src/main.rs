fn main() -> std::process::ExitCode {
    patchscope::cli::main()
}
