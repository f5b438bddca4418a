fn main() {
    std::process::exit(ledgersim::cli::run(std::env::args_os()));
}
