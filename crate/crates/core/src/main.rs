fn main() {
    std::process::exit(dnsflow::cli::main_with_args(std::env::args_os()));
}
