fn main() {
    std::process::exit(ssdgm::cli::run(std::env::args_os()));
}
