fn main() {
    std::process::exit(bart_rdd_cli::run(std::env::args_os()));
}
