fn main() {
    std::process::exit(bammit::cli::run(std::env::args_os()));
}
