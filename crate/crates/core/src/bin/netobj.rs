fn main() {
    std::process::exit(netobj::cli::run(std::env::args_os()));
}
