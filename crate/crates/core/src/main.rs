fn main() {
    std::process::exit(interprim::cli::run(std::env::args_os()));
}
