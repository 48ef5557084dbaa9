fn main() {
    std::process::exit(pdmlab::cli::run(std::env::args_os()));
}
