fn main() {
    std::process::exit(mbpm::cli::run_from(std::env::args_os()));
}
