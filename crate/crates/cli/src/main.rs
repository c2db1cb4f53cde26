fn main() {
    std::process::exit(qs_cli::run(std::env::args_os()));
}
