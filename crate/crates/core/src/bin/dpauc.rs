fn main() {
    std::process::exit(dpauc::cli::main_with_args(std::env::args_os()));
}
