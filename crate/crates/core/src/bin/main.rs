fn main() {
    std::process::exit(robust_irt::cli::cli_main(std::env::args_os()));
}
