fn main() {
    std::process::exit(certiprop::cli::run(std::env::args_os()));
}
