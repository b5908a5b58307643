fn main() {
    std::process::exit(slungload::cli::main());
}
