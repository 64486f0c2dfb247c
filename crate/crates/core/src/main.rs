fn main() {
    std::process::exit(dmorl::cli::main());
}
