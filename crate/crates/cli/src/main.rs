use std::io::Write;
use std::process::ExitCode;

use bkc_cli::{commands, render, run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            if let Some(path) = &cli.json_out {
                if let Err(e) = commands::write_json(path, &out.json) {
                    eprintln!("error: {e}");
                    return ExitCode::from(e.exit_code() as u8);
                }
            }
            let mut stdout = std::io::stdout().lock();
            let shown = match (&out.text, &cli.json_out) {
                (Some(text), _) => Some(text.clone()),
                (None, None) => Some(render(&out.json)),
                (None, Some(_)) => None,
            };
            if let Some(s) = shown {
                let _ = stdout.write_all(s.as_bytes());
            }
            if out.exit_code != 0 {
                if let Some(f) = out.json.get("failure").and_then(|f| f.as_str()) {
                    eprintln!("FAIL: {f}");
                }
            }
            ExitCode::from(out.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
