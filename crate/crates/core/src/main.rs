fn main() {
    std::process::exit(ratesplit::cli::main_with_args(std::env::args_os()));
}
