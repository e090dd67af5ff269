fn main() {
    std::process::exit(levy_reset::cli::main());
}
