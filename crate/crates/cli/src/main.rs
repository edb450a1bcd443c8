fn main() {
    std::process::exit(hopf_cli::run(std::env::args_os()));
}
