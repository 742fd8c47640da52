fn main() {
    std::process::exit(edemajoint::cli::run(std::env::args_os()));
}
