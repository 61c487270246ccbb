fn main() {
    std::process::exit(sct_core::cli::main_entry());
}
