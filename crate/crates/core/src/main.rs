fn main() {
    std::process::exit(textrec::cli::run(std::env::args_os()));
}
