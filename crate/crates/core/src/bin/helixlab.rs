fn main() {
    std::process::exit(helical_flow::cli::main());
}
