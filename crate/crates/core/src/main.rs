fn main() {
    std::process::exit(daal_core::cli::run(std::env::args_os()));
}
