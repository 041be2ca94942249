fn main() {
    std::process::exit(kpgeom::cli::run(std::env::args_os()));
}
