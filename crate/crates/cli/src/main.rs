mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};

fn main() -> ExitCode {
    let argv = match config::expand_config(std::env::args_os().collect()) {
        Ok(argv) => argv,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let name = match &cli.command {
        Command::Simulate(_) => "simulate",
        Command::Infer(_) => "infer",
        Command::Study(_) => "study",
        Command::Metrics(_) => "metrics",
        Command::Negctl(_) => "negctl",
    };
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Infer(a) => commands::infer(&a),
        Command::Study(a) => commands::study(&a),
        Command::Metrics(a) => commands::metrics(&a),
        Command::Negctl(a) => commands::negctl(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let causes: Vec<String> = e.chain().skip(1).map(|c| c.to_string()).collect();
            let msg = serde_json::json!({
                "status": "error",
                "command": name,
                "message": e.to_string(),
                "causes": causes,
            });
            eprintln!("{msg}");
            ExitCode::from(1)
        }
    }
}
