fn main() {
    std::process::exit(lsysinfer::cli::main_with_args(std::env::args_os()));
}
