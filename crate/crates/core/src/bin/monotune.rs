fn main() {
    std::process::exit(monotune::cli::run(std::env::args_os()));
}
