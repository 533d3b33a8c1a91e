fn main() {
    std::process::exit(centile::cli::run(std::env::args_os()));
}
