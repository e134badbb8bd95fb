fn main() {
    std::process::exit(adma::harness::cli::run(std::env::args_os()));
}
