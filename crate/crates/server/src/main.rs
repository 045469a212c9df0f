fn main() {
    std::process::exit(etb_server::cli::run(std::env::args_os()));
}
