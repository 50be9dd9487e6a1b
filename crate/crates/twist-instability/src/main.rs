fn main() {
    std::process::exit(twist_instability::cli::main_with_args(std::env::args_os()));
}
