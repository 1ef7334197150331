fn main() {
    std::process::exit(doodle_cli::run_cli(std::env::args_os()));
}
