fn main() {
    std::process::exit(scaffold_brace::cli::run(std::env::args_os()));
}
