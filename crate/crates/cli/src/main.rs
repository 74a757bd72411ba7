fn main() {
    std::process::exit(tweezerlab_cli::run(std::env::args_os()));
}
