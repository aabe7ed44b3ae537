fn main() {
    std::process::exit(ewaste_cli::run(std::env::args_os()));
}
