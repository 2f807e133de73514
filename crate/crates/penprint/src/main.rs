fn main() {
    std::process::exit(penprint::cli::run(std::env::args_os()));
}
