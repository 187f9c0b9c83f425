fn main() {
    std::process::exit(krylovrl::cli::run(std::env::args_os()));
}
