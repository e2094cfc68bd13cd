use clap::Parser;

fn main() {
    std::process::exit(evvel_cli::run(evvel_cli::Cli::parse()));
}
