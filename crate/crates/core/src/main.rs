fn main() {
    std::process::exit(fisim::cli::main_with_args(std::env::args_os()));
}
