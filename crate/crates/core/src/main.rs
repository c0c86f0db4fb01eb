fn main() {
    std::process::exit(psyforge::cli::run(std::env::args_os()));
}
