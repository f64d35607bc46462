fn main() {
    std::process::exit(dualpath::cli::run(std::env::args_os()));
}
