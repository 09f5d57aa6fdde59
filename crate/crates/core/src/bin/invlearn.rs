fn main() {
    std::process::exit(invlearn::cli::run(std::env::args_os()));
}
