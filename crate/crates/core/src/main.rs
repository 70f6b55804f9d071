fn main() {
    std::process::exit(fairlens::harness::cli::main_with_args(std::env::args_os()));
}
