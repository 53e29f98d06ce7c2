fn main() {
    std::process::exit(cdpg::cli::main_with_args(std::env::args_os()));
}
