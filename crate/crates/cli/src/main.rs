fn main() {
    std::process::exit(pvseg::cli::run(std::env::args_os()));
}
