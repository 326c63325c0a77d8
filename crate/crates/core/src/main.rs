use clap::Parser;

fn main() {
    let cli = gpsr::cli::Cli::parse();
    if let Err(e) = gpsr::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
