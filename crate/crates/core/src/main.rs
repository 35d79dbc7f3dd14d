fn main() {
    std::process::exit(corlmc::cli::run_command(std::env::args_os()));
}
