fn main() {
    std::process::exit(scglove_cli::cli::run_subcommand(std::env::args_os()));
}
