use clap::Parser;

fn main() {
    let cli = match gtherm_cli::Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                // --help / --version
                std::process::exit(0);
            }
            eprintln!("error stage=args code=2 msg=\"{}\"", e.kind());
            std::process::exit(2);
        }
    };
    if let Err(e) = gtherm_cli::run(cli) {
        eprintln!("{}", e.record());
        std::process::exit(e.exit_code());
    }
}
