use clap::Parser;

fn main() -> std::process::ExitCode {
    let cli = hitchin_cli::Cli::parse();
    match hitchin_cli::main_with(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::from(2)
        }
    }
}
