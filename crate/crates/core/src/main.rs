use std::process::exit;

fn main() {
    exit(simsec::harness::cli_main(std::env::args().collect()));
}
