fn main() {
    std::process::exit(msgate::app::main_with_args(std::env::args_os()));
}
