fn main() {
    std::process::exit(pgld::run_cli(std::env::args_os()));
}
