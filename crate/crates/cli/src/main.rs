fn main() {
    std::process::exit(oneshot_cli::main_with_args(std::env::args_os()));
}
