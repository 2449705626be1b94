fn main() {
    std::process::exit(misfdr::cli::run(std::env::args_os()));
}
