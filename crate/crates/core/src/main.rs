fn main() {
    let code = affuse::cli::run(std::env::args_os());
    std::process::exit(code);
}
