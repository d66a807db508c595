fn main() {
    std::process::exit(glioma_subtyping::cli::run_command(std::env::args_os()));
}
