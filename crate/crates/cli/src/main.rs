fn main() {
    std::process::exit(isp_cli::run(std::env::args_os()));
}
