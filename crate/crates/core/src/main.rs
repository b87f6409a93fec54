fn main() {
    std::process::exit(hornforge::cli::run(std::env::args_os()));
}
