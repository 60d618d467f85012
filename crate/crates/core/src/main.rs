fn main() {
    std::process::exit(kwgraph::cli::main());
}
