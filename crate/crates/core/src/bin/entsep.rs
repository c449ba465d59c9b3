use clap::Parser;

use entsep::cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ENTSEP_LOG", "warn")).init();
    let cli = Cli::parse();
    let outcome = run(&cli);
    for line in &outcome.lines {
        if outcome.code == 0 || !line.starts_with("error:") {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }
    std::process::exit(outcome.code);
}
