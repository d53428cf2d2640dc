fn main() {
    let code = grouprisk::cli::dispatch(std::env::args_os());
    std::process::exit(code);
}
