fn main() {
    std::process::exit(peakunroll::cli::run_from(std::env::args_os()));
}
