fn main() {
    std::process::exit(albench::bench::cli::cli_main(std::env::args_os()));
}
