fn main() {
    std::process::exit(stakelight::cli::run(std::env::args_os()));
}
