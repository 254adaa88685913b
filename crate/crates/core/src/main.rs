fn main() {
    std::process::exit(tsgan::cli::run(std::env::args_os()));
}
