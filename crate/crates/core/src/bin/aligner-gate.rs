fn main() -> std::process::ExitCode {
    aligner_gate::cli::run(std::env::args_os())
}
