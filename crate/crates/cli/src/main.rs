fn main() {
    std::process::exit(hrrp_cli::run(std::env::args_os()));
}
