fn main() {
    std::process::exit(ebmix_cli::run(std::env::args_os()));
}
