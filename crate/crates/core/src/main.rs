fn main() {
    let code = anonymixer::cli::parse_and_dispatch(std::env::args());
    std::process::exit(code);
}
