fn main() {
    std::process::exit(netcube::cli::run(std::env::args_os()));
}
