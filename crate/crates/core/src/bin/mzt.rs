fn main() {
    let code = mzteleport::cli::run(std::env::args().collect());
    std::process::exit(code);
}
