fn main() {
    std::process::exit(retest::cli::run(std::env::args_os()));
}
