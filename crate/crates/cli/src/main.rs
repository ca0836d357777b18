use clap::Parser;

fn main() {
    let cli = qpsurrogate_cli::Cli::parse();
    if let Err(e) = qpsurrogate_cli::run(cli) {
        eprintln!("{}", e.to_json());
        std::process::exit(e.exit_code());
    }
}
