fn main() {
    std::process::exit(airway_cpd_core::cli::main_with(std::env::args_os()));
}
