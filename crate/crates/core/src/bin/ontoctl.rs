fn main() {
    std::process::exit(ontoctl::interface::cli::run(std::env::args_os()));
}
