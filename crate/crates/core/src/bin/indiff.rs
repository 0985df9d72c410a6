fn main() {
    std::process::exit(indiff::cli::main_with(std::env::args_os()));
}
