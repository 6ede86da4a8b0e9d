fn main() {
    std::process::exit(qoe_transfer::cli::main_with_args(std::env::args_os()));
}
