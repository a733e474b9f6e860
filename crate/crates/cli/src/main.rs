fn main() {
    std::process::exit(soda_cli::cli_main(std::env::args_os()));
}
