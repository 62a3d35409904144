use clap::Parser;
use powercap_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(&cli) {
        eprintln!("{}", err.to_json());
        std::process::exit(err.category.exit_code());
    }
}
