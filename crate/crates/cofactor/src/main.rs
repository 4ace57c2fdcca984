fn main() {
    std::process::exit(cofactor::cli::run(std::env::args().collect()));
}
