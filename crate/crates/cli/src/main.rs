fn main() {
    std::process::exit(rcad_cli::run(std::env::args_os()));
}
