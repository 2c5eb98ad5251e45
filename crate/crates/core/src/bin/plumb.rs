fn main() {
    std::process::exit(plumbing::cli::run(std::env::args_os()));
}
