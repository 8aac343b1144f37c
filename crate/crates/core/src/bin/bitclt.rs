fn main() {
    std::process::exit(bitclt::cli::run(std::env::args()));
}
