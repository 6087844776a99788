fn main() {
    std::process::exit(ibnmp::main_with_args());
}
