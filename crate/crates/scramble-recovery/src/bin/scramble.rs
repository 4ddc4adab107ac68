fn main() {
    std::process::exit(scramble_recovery::cli::run(std::env::args_os()));
}
