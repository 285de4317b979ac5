fn main() {
    std::process::exit(quantscene::cli::run(std::env::args()));
}
