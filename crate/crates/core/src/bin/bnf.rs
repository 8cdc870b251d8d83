fn main() {
    std::process::exit(birkhoff::cli::run(std::env::args_os()));
}
