fn main() {
    std::process::exit(selfplay_csc::harness::cli::run(std::env::args_os()));
}
