fn main() {
    std::process::exit(cogeffort_cli::app::run(std::env::args_os()));
}
