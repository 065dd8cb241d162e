fn main() {
    std::process::exit(chemostat::cli::main_entry());
}
