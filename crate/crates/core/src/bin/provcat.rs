fn main() {
    std::process::exit(provcat::cli::main());
}
