fn main() {
    std::process::exit(pcrd_cli::main_with_args(std::env::args_os()));
}
