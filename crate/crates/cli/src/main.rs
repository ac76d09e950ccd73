fn main() {
    std::process::exit(slnp_cli::run_cli(std::env::args_os()));
}
