fn main() {
    std::process::exit(duelroute::cli::run_from(std::env::args_os()));
}
