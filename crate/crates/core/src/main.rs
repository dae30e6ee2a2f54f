fn main() {
    std::process::exit(genstore::cli::run(std::env::args_os()));
}
