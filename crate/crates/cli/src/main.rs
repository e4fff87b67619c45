fn main() {
    std::process::exit(brandlink_cli::run(std::env::args_os()));
}
