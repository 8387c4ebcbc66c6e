fn main() {
    std::process::exit(chartpde::cli::run_from(std::env::args_os()));
}
