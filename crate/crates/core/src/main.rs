fn main() {
    std::process::exit(imgnilm::cli::run());
}
