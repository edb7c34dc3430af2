use clap::Parser;

fn main() {
    let cli = nexdenoise_cli::Cli::parse();
    if let Err(e) = nexdenoise_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
