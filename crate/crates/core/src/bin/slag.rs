fn main() {
    std::process::exit(slag::cli::run());
}
