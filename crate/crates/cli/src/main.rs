fn main() {
    std::process::exit(ekman_cli::main_with_args(std::env::args_os()));
}
