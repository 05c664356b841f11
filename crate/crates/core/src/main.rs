fn main() {
    std::process::exit(aoi_pricing::cli::run(std::env::args_os()));
}
