use clap::Parser;

fn main() {
    let cli = eim::cli::Cli::parse();
    if let Err(e) = eim::cli::run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
