fn main() {
    std::process::exit(sagfn::cli::main_with(std::env::args_os()));
}
