fn main() {
    std::process::exit(pfft_core::cli::parse_and_run(std::env::args()));
}
