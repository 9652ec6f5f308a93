fn main() {
    std::process::exit(servokin::cli::run(std::env::args_os()));
}
