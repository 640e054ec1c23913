fn main() {
    std::process::exit(hybrid_epr::cli::main_with_args(std::env::args_os()));
}
