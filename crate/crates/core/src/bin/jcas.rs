fn main() {
    std::process::exit(jcas::harness::cli::cli_main(std::env::args_os()));
}
