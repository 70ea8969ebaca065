fn main() {
    std::process::exit(decoherence_core::cli::main_from_env());
}
