fn main() {
    std::process::exit(fdswipt_harness::cli::main_with(std::env::args_os()));
}
