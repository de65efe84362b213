fn main() {
    std::process::exit(fsqkd::cli::main_with_args(std::env::args_os()));
}
