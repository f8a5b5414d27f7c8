//! `pickleguard`: scan model files, search AST dumps for gadgets, write the
//! fixture corpus, check gadget databases.

mod args;
mod config;
mod db;
mod ddg;
mod forge;
mod scan;

use args::{Cli, Command};
use clap::Parser;
use config::ConfigError;
use pickleguard_core::report::EXIT_CONFIG_ERROR;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

fn emit(text: &str, output: Option<&Path>) -> Result<(), ConfigError> {
    match output {
        Some(p) => std::fs::write(p, text).map_err(|e| ConfigError(format!("output {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            // a closed pipe is not an error worth a non-zero exit
            let _ = out.write_all(text.as_bytes());
            Ok(())
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32, ConfigError> {
    let (text, code, output) = match &cli.command {
        Command::Scan(a) => {
            let (t, c) = scan::run(a)?;
            (t, c, a.out.output.as_deref())
        }
        Command::Ddg(a) => {
            let (t, c) = ddg::run(a)?;
            (t, c, a.out.output.as_deref())
        }
        Command::Forge(a) => {
            let (t, c) = forge::run(a)?;
            (t, c, None)
        }
        Command::Db { action } => {
            let (t, c) = db::run(action)?;
            (t, c, None)
        }
    };
    emit(&text, output)?;
    Ok(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG_ERROR as u8 } else { 0 });
        }
    };
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("pickleguard: {e}");
            ExitCode::from(EXIT_CONFIG_ERROR as u8)
        }
    }
}
