fn main() {
    std::process::exit(slowfast::cli::cli_main(std::env::args_os()));
}
