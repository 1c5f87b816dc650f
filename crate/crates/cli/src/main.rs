fn main() {
    std::process::exit(msfc_cli::run(std::env::args_os()));
}
