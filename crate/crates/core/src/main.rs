fn main() {
    std::process::exit(tacsim::cli::main());
}
