fn main() {
    std::process::exit(prif::cli::run(std::env::args_os()));
}
