fn main() {
    std::process::exit(bidaf_sa::cli::run(std::env::args_os()));
}
