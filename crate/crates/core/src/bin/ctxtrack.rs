fn main() {
    std::process::exit(ctxtrack::cli::run(std::env::args_os()));
}
