fn main() {
    std::process::exit(crq_core::cli::run(std::env::args_os()));
}
