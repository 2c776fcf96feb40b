use clap::Parser;
use lopacity_cli::{execute, exit_code, Cli};

fn main() {
    let cli = Cli::parse();
    let r = execute(&cli, &mut std::io::stdout().lock());
    if let Err(e) = &r {
        eprintln!("error: {e}");
    }
    std::process::exit(exit_code(&r));
}
