fn main() {
    std::process::exit(neurowf::cli::run(std::env::args_os()));
}
