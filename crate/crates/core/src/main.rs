fn main() {
    std::process::exit(videominer::cli::main_with_args(std::env::args_os()));
}
