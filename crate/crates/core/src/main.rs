fn main() {
    std::process::exit(curvnet::cli::run_from_args(std::env::args_os()));
}
