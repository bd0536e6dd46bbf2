use clap::Parser;

fn main() {
    // clap exits 2 on bad usage by default; this tool reserves 2 for data
    // errors, so usage problems are remapped to 1 (help/version stay 0).
    let cli = match tlforce_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = tlforce_cli::run(cli) {
        eprintln!("error: {}", e.message());
        std::process::exit(e.exit_code());
    }
}
