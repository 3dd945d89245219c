use clap::Parser;

fn main() {
    let cli = matdnn_cli::Cli::parse();
    if let Err(e) = matdnn_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
