fn main() {
    std::process::exit(kpcast::cli::run(std::env::args_os()));
}
