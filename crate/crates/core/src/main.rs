fn main() {
    std::process::exit(ksdm::cli::main_with_args(std::env::args_os()));
}
