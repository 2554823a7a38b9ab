fn main() {
    std::process::exit(arw_cli::dispatch(std::env::args_os()));
}
