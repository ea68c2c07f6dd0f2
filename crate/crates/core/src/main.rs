fn main() {
    std::process::exit(hieropt::harness::cli::run_cli(std::env::args_os()));
}
