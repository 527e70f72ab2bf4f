fn main() {
    std::process::exit(harcov::cli::run(std::env::args_os()));
}
