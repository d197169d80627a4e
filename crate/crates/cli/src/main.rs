use clap::Parser;

fn main() {
    let cli = jumpexp_cli::Cli::parse();
    std::process::exit(jumpexp_cli::run(cli));
}
