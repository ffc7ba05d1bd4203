fn main() {
    std::process::exit(cryo_decoder::cli::main_with_args(std::env::args_os()));
}
