use std::process::exit;

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    exit(rsltree::cli::dispatch(&argv));
}
