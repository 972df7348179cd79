fn main() {
    std::process::exit(isac_core::cli::main_with_args(std::env::args_os()));
}
