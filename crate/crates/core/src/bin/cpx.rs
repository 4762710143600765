fn main() {
    std::process::exit(cpx::cli::main_with_env());
}
