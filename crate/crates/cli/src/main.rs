use clap::Parser;

fn main() {
    let cli = wronski_cli::Cli::parse();
    std::process::exit(wronski_cli::run(&cli));
}
