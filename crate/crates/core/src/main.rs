fn main() {
    std::process::exit(curvegap::cli::run());
}
