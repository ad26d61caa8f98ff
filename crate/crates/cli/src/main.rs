fn main() {
    std::process::exit(mtslm_cli::run(std::env::args_os()));
}
