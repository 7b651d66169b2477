fn main() {
    std::process::exit(batchelor_lab::main_with(std::env::args_os()));
}
