fn main() {
    std::process::exit(tbm_core::cli::run(std::env::args_os()));
}
