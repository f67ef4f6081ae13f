fn main() {
    std::process::exit(pathweight_cli::cli_main(std::env::args()));
}
