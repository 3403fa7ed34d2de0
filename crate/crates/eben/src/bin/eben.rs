fn main() {
    std::process::exit(eben::run_cli(std::env::args_os()));
}
