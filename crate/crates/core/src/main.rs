fn main() {
    std::process::exit(ecc_aht::cli::dispatch(std::env::args_os()));
}
