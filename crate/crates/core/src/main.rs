use clap::Parser;
use kinetic_brw::cli::{main_with, Cli};

fn main() {
    std::process::exit(main_with(Cli::parse()));
}
