use clap::Parser;
use fredo_cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(manifest) => {
            eprintln!(
                "{}: wrote {} to {}",
                manifest.command,
                manifest.outputs.join(", "),
                cli.global.out.as_deref().map_or_else(
                    || format!("runs/{}", manifest.command),
                    |p| p.display().to_string()
                )
            );
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
