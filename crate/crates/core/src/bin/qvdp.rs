fn main() {
    std::process::exit(qvdp::cli::main_with_args(std::env::args_os()));
}
