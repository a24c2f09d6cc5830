use clap::Parser;
use genbound_cli::{run, Cli};

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            for path in [out.csv, out.svg, out.report].into_iter().flatten() {
                println!("wrote {}", path.display());
            }
        }
        Err(e) => {
            eprintln!("genbound: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
