fn main() {
    std::process::exit(cascade_transfer::cli::run(std::env::args_os()));
}
