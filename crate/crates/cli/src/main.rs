use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use krawtex_cli::args::Cli;
use krawtex_cli::CliError;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let text: Vec<&str> = msg
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:"))
                .filter(|l| !l.is_empty() && !l.starts_with("For more information") && !l.starts_with("tip:"))
                .collect();
            let text = text.join(" ");
            let err = CliError::Usage(text.strip_prefix("error: ").unwrap_or(&text).to_string());
            eprintln!("{}", err.to_json_line());
            return ExitCode::from(err.exit_code());
        }
    };
    match krawtex_cli::run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", err.to_json_line());
            ExitCode::from(err.exit_code())
        }
    }
}
