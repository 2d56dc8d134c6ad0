fn main() {
    std::process::exit(gzsl_cli::run(std::env::args_os()));
}
