fn main() {
    std::process::exit(tierguard_cli::run(std::env::args_os()));
}
