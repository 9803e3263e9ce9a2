fn main() {
    std::process::exit(sph::cli::run(std::env::args_os()));
}
