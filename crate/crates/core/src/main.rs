fn main() {
    std::process::exit(latent_score::cli::main_with_args(std::env::args_os()));
}
