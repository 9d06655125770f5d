fn main() {
    std::process::exit(dpm_sga::cli::cli_main(std::env::args_os()));
}
