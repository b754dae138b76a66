fn main() {
    std::process::exit(camt::cli::main());
}
