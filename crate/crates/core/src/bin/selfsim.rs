fn main() {
    std::process::exit(selfsim::cli::dispatch(std::env::args_os()));
}
