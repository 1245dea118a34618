fn main() {
    std::process::exit(nlsemigroup::cli::main_with_args(std::env::args_os()));
}
