fn main() {
    std::process::exit(grcca_cli::main_with_args(std::env::args_os()));
}
