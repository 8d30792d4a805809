use clap::Parser;
use nmqrl::io::{run_cli, Cli};

fn main() {
    let cli = Cli::parse();
    match run_cli(&cli) {
        Ok(manifest) => {
            let out = manifest.config.out.display();
            for name in &manifest.outputs {
                println!("{out}/{name}");
            }
        }
        Err(e) => {
            eprintln!("nmqrl: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
