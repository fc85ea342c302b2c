fn main() {
    std::process::exit(axisreg_cli::run_cli(std::env::args_os()));
}
