fn main() {
    std::process::exit(tpg_cli::run(std::env::args().skip(1)));
}
