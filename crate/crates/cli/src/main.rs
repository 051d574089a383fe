fn main() {
    std::process::exit(abwv_cli::run(std::env::args_os()));
}
