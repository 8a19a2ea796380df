fn main() {
    std::process::exit(catp::cli::run(std::env::args_os()));
}
