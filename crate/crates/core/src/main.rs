fn main() {
    std::process::exit(qpwalk::cli::run(std::env::args_os()));
}
