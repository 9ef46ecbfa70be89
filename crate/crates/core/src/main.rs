fn main() {
    std::process::exit(nlmpf::cli::run(std::env::args_os()));
}
