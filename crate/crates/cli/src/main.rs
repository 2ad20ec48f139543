fn main() {
    std::process::exit(randpoly_cli::main_with(std::env::args_os()));
}
