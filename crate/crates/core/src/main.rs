fn main() {
    std::process::exit(osborn::cli::run());
}
