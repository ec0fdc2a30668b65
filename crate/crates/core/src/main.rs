fn main() {
    std::process::exit(agu::cli::run(std::env::args_os()));
}
