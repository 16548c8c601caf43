fn main() {
    std::process::exit(bohm_phase::cli::run_from(std::env::args_os()));
}
