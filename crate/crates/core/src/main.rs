fn main() {
    std::process::exit(maser::cli::run_command(std::env::args()));
}
