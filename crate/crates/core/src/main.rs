fn main() -> std::process::ExitCode {
    atlstm::cli::main_with_args()
}
